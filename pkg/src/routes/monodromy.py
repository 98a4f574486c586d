import click

from src.routes.analysis import execute, vector_option


@click.command()
@click.argument('scenario')
@click.option('--system', type=click.Choice(['killing', 'connection']), default='killing', show_default=True,
              help='Prolonged Killing system or the connection itself.')
@click.option('--basepoint', help='Loop basepoint, e.g. "1, 1".')
@click.pass_context
def monodromy(ctx, scenario, system, basepoint):
    """Local monodromy around every divisor component and the extension verdict"""
    execute(ctx, scenario, 'monodromy',
            lambda spec: {'system': system, 'basepoint': vector_option(basepoint, 'basepoint', spec.nvars)})
