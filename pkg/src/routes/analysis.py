import json

import click

from src.models.analysis import check_expectations, run_analysis
from src.models.errors import ConnscopeError, ExpectationMismatch, ValidationError
from src.models.report import FORMATS, emit_report, render_json, render_text, write_traces
from src.models.scenarios import get_store


# Input validation
def validate_vector(text, name, size=None):
    """Parse `a, b, ...` into complex numbers (`i` or `j` for the imaginary unit)"""
    errors = []
    values = []
    for part in text.split(','):
        part = part.strip().replace(' ', '')
        if not part:
            errors.append(f'{name}: empty coordinate')
            continue
        try:
            values.append(complex(part.replace('i', 'j')))
        except ValueError:
            errors.append(f'{name}: not a number: {part}')
    if size is not None and not errors and len(values) != size:
        errors.append(f'{name} needs {size} coordinates, got {len(values)}')
    return values, errors


def vector_option(text, name, size):
    if text is None:
        return None
    values, errors = validate_vector(text, name, size)
    if errors:
        raise ValidationError(errors)
    return values


def envelope(success, data=None, error=None):
    result = {'success': success}
    if data is not None:
        result['data'] = data
    if error is not None:
        result['error'] = error
    return json.dumps(result, sort_keys=False)


def execute(ctx, scenario, command, options=None, formats=None):
    """Load, run, check and emit; exits with the report's code"""
    settings = ctx.obj
    try:
        spec = get_store().resolve(scenario)
        if callable(options):
            options = options(spec)
        report = run_analysis(spec, command, options, settings['config'])
        mismatches = check_expectations(report, spec.expectations) if settings['check'] else []

        formats = formats or [settings['format']]
        if settings['out'] is None and formats != ['csv-traces'] and len(formats) == 1:
            click.echo(render_json(report) if formats[0] == 'json' else render_text(report), nl=False)
            paths = []
        else:
            paths = [p for fmt in formats for p in emit_report(report, fmt, settings['out'])]
            click.echo(envelope(report.exit_code == 0, {
                'scenario': report.scenario,
                'command': command,
                'files': paths,
                'errors': report.errors,
            }))
        if mismatches:
            raise ExpectationMismatch(mismatches)
        ctx.exit(report.exit_code)

    except ConnscopeError as e:
        partial = getattr(e, 'report', None)
        if partial is not None and partial.traces and settings['out'] is not None:
            write_traces(partial, settings['out'])
        click.echo(envelope(False, error=str(e)), err=True)
        ctx.exit(e.exit_code)


@click.command()
@click.argument('scenario')
@click.option('--basepoint', help='Basepoint for Killing and monodromy stages, e.g. "1, 1".')
@click.pass_context
def analyze(ctx, scenario, basepoint):
    """Run every stage on SCENARIO (a bundled name or a .conn path)"""
    execute(ctx, scenario, 'analyze', lambda spec: {'basepoint': vector_option(basepoint, 'basepoint', spec.nvars)})


@click.command()
@click.argument('scenario')
@click.pass_context
def torsion(ctx, scenario):
    """Exact torsion tensor"""
    execute(ctx, scenario, 'torsion')


@click.command()
@click.argument('scenario')
@click.pass_context
def curvature(ctx, scenario):
    """Exact curvature tensor and branched verdict"""
    execute(ctx, scenario, 'curvature')


@click.command()
@click.argument('scenario')
@click.option('--basepoint', help='Basepoint for Killing and monodromy stages.')
@click.pass_context
def report(ctx, scenario, basepoint):
    """Full analysis written as report.json, summary.txt and traces"""
    if ctx.obj['out'] is None:
        ctx.obj['out'] = '.'
    execute(ctx, scenario, 'report', lambda spec: {'basepoint': vector_option(basepoint, 'basepoint', spec.nvars)},
            formats=list(FORMATS))
