from fractions import Fraction

import numpy as np
import pytest
from scipy.linalg import expm

from src.models.connection import LinearSystem, matrix
from src.models.errors import (
    DegenerateTransversal,
    NotInvariant,
    PoleApproach,
    QuotientIllDefined,
    StepUnderflow,
)
from src.models.killing import build_prolonged_system, killing_subspace_at, transport_killing_jet
from src.models.monodromy import (
    Loop,
    extension_property,
    loop_around,
    monodromy,
    quotient_monodromy,
    residue_criterion,
    restrict,
)
from src.models.rational import Chart
from src.models.transport import Path, TransportResult, transport


@pytest.mark.parametrize('lam, integral', [('1/3', False), ('1/2', False), ('2', True), ('-1', True)])
def test_scalar_monodromy(plane, residue_system, lam, integral):
    system = residue_system([[lam]])
    loop = loop_around(plane, plane.divisor[0], (1, 1))
    result = monodromy(system, loop)
    assert result.M[0, 0] == pytest.approx(np.exp(-2j * np.pi * float(Fraction(lam))), abs=1e-8)
    assert result.steps > 0
    verdict = residue_criterion(system, plane.divisor[0])
    assert verdict.predicted_trivial is integral
    assert (result.distance_from_identity < 1e-6) is integral


def test_loop_around_curved_component():
    chart = Chart(('z1', 'z2'))
    chart = chart.with_divisor([chart.component('z1 - z2^2', 1, 'q')])
    loop = loop_around(chart, chart.divisor[0], (2, 1), radius=0.25)
    circle = loop.path.segments[1]
    np.testing.assert_allclose(circle.center, [1, 1])
    assert circle.radius == 0.25
    assert loop.component == 'q'
    np.testing.assert_allclose(loop.path.start, [2, 1])
    assert loop.path.is_closed


def test_loop_that_encloses_another_component():
    chart = Chart(('z1', 'z2'))
    chart = chart.with_divisor([chart.component('z1', 1, 'z1'), chart.component('4*z1 - 1', 1, 'q')])
    with pytest.raises(DegenerateTransversal):
        loop_around(chart, chart.divisor[0], (1, 1), radius=0.5)


def test_loop_from_a_point_on_the_component(plane):
    with pytest.raises(DegenerateTransversal):
        loop_around(plane, plane.divisor[0], (0, 1))


def test_nilpotent_residue(plane, residue_system):
    system = residue_system([[0, 1], [0, 0]])
    M = monodromy(system, loop_around(plane, plane.divisor[0], (1, 1))).M
    np.testing.assert_allclose(M, [[1, -2j * np.pi], [0, 1]], atol=1e-8)
    verdict = residue_criterion(system, plane.divisor[0])
    assert verdict.predicted_trivial is False
    assert not verdict.data.diagonalizable


def test_integer_diagonal_residue(plane, residue_system):
    system = residue_system([[1, 0], [0, 2]])
    M = monodromy(system, loop_around(plane, plane.divisor[0], (1, 1))).M
    np.testing.assert_allclose(M, np.eye(2), atol=1e-8)
    assert residue_criterion(system, plane.divisor[0]).predicted_trivial is True


def test_pole_free_system(plane):
    A1 = matrix(plane, [[plane.one]])
    A2 = matrix(plane, [[plane.zero]])
    system = LinearSystem(plane, 1, (A1, A2))
    M = monodromy(system, loop_around(plane, plane.divisor[0], (1, 1))).M
    np.testing.assert_allclose(M, [[1]], atol=1e-10)


def test_concatenated_loops_compose():
    chart = Chart(('z1', 'z2'))
    chart = chart.with_divisor([chart.component('z1', 1, 'z1'), chart.component('z1 - 2', 1, 'q')])
    z1 = chart.var(0)
    zero = chart.zero
    A1 = matrix(chart, [[zero, 1 / z1], [1 / (z1 - 2), zero]])
    A2 = matrix(chart, [[zero, zero], [zero, zero]])
    system = LinearSystem(chart, 2, (A1, A2))
    base = (1, 0)
    first = loop_around(chart, chart.divisor[0], base)
    second = loop_around(chart, chart.divisor[1], base)
    M1 = monodromy(system, first).M
    M2 = monodromy(system, second).M
    both = monodromy(system, first.then(second)).M
    np.testing.assert_allclose(both, M2 @ M1, atol=1e-7)


def test_monodromy_does_not_depend_on_the_radius(plane, residue_system):
    system = residue_system([['1/3', 1], [0, '-1/4']])
    small = monodromy(system, loop_around(plane, plane.divisor[0], (1, 1), radius=0.25)).M
    large = monodromy(system, loop_around(plane, plane.divisor[0], (1, 1), radius=0.75)).M
    np.testing.assert_allclose(small, large, atol=1e-8)


def test_homotopic_loops_agree(plane, residue_system):
    system = residue_system([['1/3', 1], [0, '-1/4']])
    circle = monodromy(system, loop_around(plane, plane.divisor[0], (1, 1))).M
    square = Loop((1, 1), Path.polyline([(1, 1), (1j, 1), (-1, 1), (-1j, 1), (1, 1)]), 'z1')
    np.testing.assert_allclose(monodromy(system, square).M, circle, atol=1e-8)


def test_residue_predicts_the_monodromy(plane, residue_system):
    rows = [['1/3', 1], [0, '-1/4']]
    system = residue_system(rows)
    M = monodromy(system, loop_around(plane, plane.divisor[0], (1, 1))).M
    verdict = residue_criterion(system, plane.divisor[0])
    assert verdict.data.diagonalizable
    np.testing.assert_allclose(verdict.data.predicted_monodromy, M, atol=1e-8)
    R = np.array([[1 / 3, 1], [0, -1 / 4]])
    np.testing.assert_allclose(M, expm(-2j * np.pi * R), atol=1e-8)


def test_second_order_pole_is_inconclusive(plane):
    z1 = plane.var(0)
    system = LinearSystem(plane, 1, (matrix(plane, [[1 / z1 ** 2]]), matrix(plane, [[plane.zero]])))
    verdict = residue_criterion(system, plane.divisor[0])
    assert verdict.inconclusive
    assert 'order 2' in verdict.reason


def test_scalar_connection_does_not_extend(scalar_connection):
    conn = scalar_connection(0.5)
    verdict = extension_property(conn.system, (1, 1))
    assert not verdict.extends
    assert verdict.components['z1'].distance == pytest.approx(2, abs=1e-6)


def test_flat_prolonged_system_extends(flat):
    verdict = extension_property(build_prolonged_system(flat).base, (1, 1))
    assert verdict.extends
    assert verdict.evidence[0] < 1e-8


def test_hopf_extends_on_the_killing_subspace(hopf):
    prolonged = build_prolonged_system(hopf.connection)
    subspace = killing_subspace_at(prolonged, (1, 1))
    verdict = extension_property(prolonged.base, (1, 1), subspace)
    assert verdict.extends


def test_quotient_by_an_eigendirection(plane, residue_system):
    system = residue_system([['1/2', 0], [0, 1]])
    loop = loop_around(plane, plane.divisor[0], (1, 1))
    assert quotient_monodromy(system, (1, 0), loop).trivial
    other = quotient_monodromy(system, (0, 1), loop)
    assert not other.trivial
    assert other.distance == pytest.approx(2, abs=1e-6)


def test_quotient_by_a_moving_direction(plane, residue_system):
    system = residue_system([[0, 1], [0, 0]])
    loop = loop_around(plane, plane.divisor[0], (1, 1))
    with pytest.raises(QuotientIllDefined):
        quotient_monodromy(system, (0, 1), loop)


def test_restrict():
    M = np.array([[1, 1], [0, 1]], dtype=complex)
    np.testing.assert_allclose(restrict(M, np.array([[1], [0]], dtype=complex)), [[1]])
    with pytest.raises(NotInvariant):
        restrict(M, np.array([[0], [1]], dtype=complex))


def test_transport_refuses_a_path_through_the_divisor(hopf):
    with pytest.raises(PoleApproach) as info:
        transport(hopf.connection.system, Path.polyline([(1, 1), (-1, 1)]))
    last = info.value.last_state
    assert 0 < abs(last[0]) < 1e-2
    assert last[0].real > 0


def test_transport_refuses_a_near_miss(hopf):
    path = Path.polyline([(1 + 1e-7j, 1), (-1 + 1e-7j, 1)])
    with pytest.raises(PoleApproach):
        transport(hopf.connection.system, path)
    prolonged = build_prolonged_system(hopf.connection)
    with pytest.raises(PoleApproach):
        transport_killing_jet(prolonged, path, np.ones(6))


def test_condition_estimate_comes_from_the_steps(plane, residue_system):
    result = monodromy(residue_system([['1/3']]), loop_around(plane, plane.divisor[0], (1, 1)))
    assert 1 <= result.condition < np.inf
    assert result.steps > 0


def test_singular_monodromy_is_an_error(plane, residue_system, monkeypatch):
    monkeypatch.setattr('src.models.monodromy.transport',
                        lambda system, path, config=None: TransportResult(np.zeros((1, 1)), 10, 5))
    with pytest.raises(StepUnderflow):
        monodromy(residue_system([['1/3']]), loop_around(plane, plane.divisor[0], (1, 1)))
