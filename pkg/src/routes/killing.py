import click

from src.routes.analysis import execute, vector_option


@click.command()
@click.argument('scenario')
@click.option('--basepoint', help='Jets are computed at this point, e.g. "1, 1".')
@click.pass_context
def killing(ctx, scenario, basepoint):
    """Killing algebra: ansatz oracle and prolonged-system subspace"""
    execute(ctx, scenario, 'killing', lambda spec: {'basepoint': vector_option(basepoint, 'basepoint', spec.nvars)})
