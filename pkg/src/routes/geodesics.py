import click

from src.models.errors import ValidationError
from src.routes.analysis import execute, vector_option


def validate_direction(values):
    """Direction A must be a nonzero vector with exact (integer) coordinates"""
    errors = []
    if not any(values):
        errors.append('direction must be nonzero')
    for value in values:
        if value.imag or value.real != int(value.real):
            errors.append(f'direction coordinates must be integers, got {value}')
    return errors


@click.command()
@click.argument('scenario')
@click.option('--z', 'z', help='Start position, defaults to the basepoint.')
@click.option('--v', 'v', help='Start velocity, defaults to e1.')
@click.option('--t-end', default='1', show_default=True, help='Complex end time, e.g. "1+0.5i".')
@click.pass_context
def geodesic(ctx, scenario, z, v, t_end):
    """Integrate a geodesic; the trajectory goes to traces/geodesic.csv"""
    def options(spec):
        t = vector_option(t_end, 't-end', 1)[0]
        return {'z': vector_option(z, 'z', spec.nvars), 'v': vector_option(v, 'v', spec.nvars), 't_end': t}

    execute(ctx, scenario, 'geodesic', options)


@click.command()
@click.argument('scenario')
@click.option('--direction', 'direction', help='Direction A in the translation part, e.g. "1, 0".')
@click.option('--z', 'z', help='Start position (frame g = Id), defaults to a point on the first component.')
@click.option('--span', default=1.0, show_default=True, help='Parameter length of the integration.')
@click.pass_context
def distinguished(ctx, scenario, direction, z, span):
    """Integrate the pole-cleared distinguished curve of A"""
    def options(spec):
        A = vector_option(direction, 'direction', spec.nvars)
        if A is not None:
            errors = validate_direction(A)
            if errors:
                raise ValidationError(errors)
            A = [int(a.real) for a in A]
        return {'direction': A, 'z': vector_option(z, 'z', spec.nvars), 'span': span}

    execute(ctx, scenario, 'distinguished', options)


@click.command()
@click.argument('scenario')
@click.pass_context
def spiral(ctx, scenario):
    """Spiral dichotomy for every divisor component"""
    execute(ctx, scenario, 'spiral')
