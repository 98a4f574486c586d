import os
import sys
# DON'T CHANGE THIS !!!
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import logging

import click

from src import __version__
from src.config import ENV_PREFIX, load_config, parse_overrides
from src.models.errors import ConnscopeError
from src.models.report import FORMATS
from src.models.scenarios import init_store
from src.routes.analysis import analyze, curvature, envelope, report, torsion
from src.routes.geodesics import distinguished, geodesic, spiral
from src.routes.killing import killing
from src.routes.monodromy import monodromy

logging.basicConfig(
    level=os.environ.get(ENV_PREFIX + 'LOG_LEVEL', 'WARNING').upper(),
    format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    stream=sys.stderr,
)


@click.group()
@click.version_option(__version__, prog_name='connscope')
@click.option('--seed', type=int, help='Seed of every randomized sampling step.')
@click.option('--tol-overrides', default='', help='Configuration overrides, e.g. "rank_tol=1e-8,loop_radius=0.25".')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory (default: report on stdout).')
@click.option('--format', 'fmt', type=click.Choice(FORMATS), default='json', show_default=True)
@click.option('--check', is_flag=True, help='Compare against the scenario [expect] entries (exit 4 on mismatch).')
@click.option('--scenarios', 'scenario_dir', type=click.Path(file_okay=False), help='Scenario directory.')
@click.pass_context
def cli(ctx, seed, tol_overrides, out, fmt, check, scenario_dir):
    """Analyzer for meromorphic affine connections on a chart of C^n"""
    try:
        overrides = parse_overrides(tol_overrides)
    except ConnscopeError as e:
        click.echo(envelope(False, error=str(e)), err=True)
        ctx.exit(e.exit_code)
    if seed is not None:
        overrides['seed'] = seed
    ctx.obj = {'config': load_config(overrides), 'out': out, 'format': fmt, 'check': check}

    # Initialize the scenario store
    init_store(scenario_dir)


# Register commands
for command in (analyze, torsion, curvature, geodesic, distinguished, spiral, killing, monodromy, report):
    cli.add_command(command)


if __name__ == '__main__':
    cli()
