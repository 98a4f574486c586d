import math

import numpy as np
import pytest

from src.models.errors import NearPoleEvaluation, ParseError, PoleOnComponent, ValidationError
from src.models.rational import (
    Chart,
    NumericEvaluator,
    evaluate,
    format_rational,
    is_holomorphic,
    multiplicity,
    order_along,
    parse_expression,
    partial,
    poles_only_on,
    random_point,
    to_complex,
    vanishes_on,
)


def test_parse_and_evaluate(plane):
    f = parse_expression('1/z1 + z2^2 - 3*i', plane)
    assert evaluate(f, (2, 1)) == pytest.approx(1.5 - 3j)


def test_parse_reduces_to_lowest_terms(plane):
    f = parse_expression('(z1^2 - 1)/(z1 - 1)', plane)
    assert f == parse_expression('z1 + 1', plane)
    assert is_holomorphic(f)


def test_negative_exponent(plane):
    assert parse_expression('z1^-2', plane) == parse_expression('1/(z1*z1)', plane)


def test_undeclared_identifier_is_positioned(plane):
    with pytest.raises(ParseError) as info:
        parse_expression('z1 + w', plane, line=7)
    assert info.value.line == 7
    assert info.value.column == 6


@pytest.mark.parametrize('text', ['', 'z1 +', 'z1 ** 2', '(z1', 'z1^z2', '1/0', '2 $ z1'])
def test_malformed_expressions(plane, text):
    with pytest.raises(ParseError):
        parse_expression(text, plane)


def test_reserved_name():
    with pytest.raises(ValidationError):
        Chart(('i', 'z2'))


def test_duplicate_names():
    with pytest.raises(ValidationError):
        Chart(('z1', 'z1'))


def test_order_along(plane):
    z1 = plane.component('z1')
    assert order_along(parse_expression('1/z1^2', plane), z1) == -2
    assert order_along(parse_expression('z1^3*z2', plane), z1) == 3
    assert order_along(parse_expression('z2 + 1', plane), z1) == 0
    assert order_along(plane.zero, z1) == math.inf


def test_multiplicity(plane):
    p = parse_expression('z1^2*(z1 - z2)', plane).numer
    assert multiplicity(p, plane.component('z1').poly) == 2
    assert multiplicity(p, plane.component('z1 - z2').poly) == 1


def test_vanishes_on(plane):
    z1 = plane.component('z1')
    assert vanishes_on(parse_expression('z1*z2', plane), z1)
    assert not vanishes_on(parse_expression('z2', plane), z1)
    with pytest.raises(PoleOnComponent):
        vanishes_on(parse_expression('1/z1', plane), z1)


def test_partial_is_exact(plane):
    f = parse_expression('z1^2*z2 + 1/z1', plane)
    assert partial(f, 0) == parse_expression('2*z1*z2 - 1/z1^2', plane)
    assert partial(f, 1) == parse_expression('z1^2', plane)


def test_poles_only_on(plane):
    assert poles_only_on(parse_expression('z2/z1^3', plane), plane.divisor)
    assert not poles_only_on(parse_expression('1/(z1*z2)', plane), plane.divisor)


def test_evaluation_floor(plane):
    f = parse_expression('1/z1', plane)
    with pytest.raises(NearPoleEvaluation):
        evaluate(f, (0, 1))
    with pytest.raises(NearPoleEvaluation):
        NumericEvaluator(plane, [f])((1e-14, 1))


def test_numeric_evaluator_shape(plane):
    fns = [parse_expression(t, plane) for t in ('1', 'z1', 'z2', 'z1*z2')]
    values = NumericEvaluator(plane, fns, shape=(2, 2))((2, 3j))
    np.testing.assert_allclose(values, [[1, 2], [3j, 6j]])


@pytest.mark.parametrize('text', ['1/(2*z1)', 'z1^2 - i*z2/3', '(z1 + z2)/(z1^2 - z2)', '-5/7*i'])
def test_format_round_trip(plane, text):
    f = parse_expression(text, plane)
    assert parse_expression(format_rational(f), plane) == f


def test_random_point_avoids_divisor(plane, rng):
    for _ in range(20):
        point = [to_complex(c) for c in random_point(plane, rng, clearance=1e-2)]
        assert abs(point[0]) > 1e-2


@pytest.mark.parametrize('f, g', [
    ('z2/z1^2', 'z1^3 + z1*z2'),
    ('(z1 - 1)/z1', 'z2^2/z1'),
    ('3', '1/z1'),
    ('z1*(z2 + i)', 'z1^-4*z2'),
])
def test_order_is_additive_on_products(plane, f, g):
    q = plane.component('z1')
    f, g = parse_expression(f, plane), parse_expression(g, plane)
    assert order_along(f * g, q) == order_along(f, q) + order_along(g, q)


@pytest.mark.parametrize('text', ['z1^3*z2^2 - i*z2', '(z1 + z2)/(z1^2 - z2)', 'z2/z1^3 + z1*z2^4'])
def test_mixed_partials_commute(plane, text):
    f = parse_expression(text, plane)
    assert partial(partial(f, 0), 1) == partial(partial(f, 1), 0)


def test_partial_matches_finite_differences(plane):
    f = parse_expression('(z1^2 + i*z2)/(z1 - z2^2)', plane)
    point = np.array([1.3 + 0.2j, 0.4 - 0.1j])
    h = 1e-6
    for var in range(2):
        step = np.zeros(2, dtype=complex)
        step[var] = h
        estimate = (evaluate(f, point + step) - evaluate(f, point - step)) / (2 * h)
        assert evaluate(partial(f, var), point) == pytest.approx(estimate, rel=1e-6)
