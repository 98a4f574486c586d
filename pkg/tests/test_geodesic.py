import math

import numpy as np
import pytest
from scipy.integrate import quad

from src.models.connection import ChartConnection, SubmoduleFrame
from src.models.errors import NotBranched, PoleApproach, UnsupportedComponent, ValidationError
from src.models.geodesic import (
    FrameBundlePoint,
    GeodesicState,
    classify_A01,
    distinguished_field,
    divisor_geodesic,
    geodesic_rhs,
    integrate_distinguished_curve,
    integrate_geodesic,
    reparametrized_residual,
    spiral_search,
    spiral_verdict,
    strong_spiral_test,
    trace_rows,
)
from src.models.rational import Chart


def test_rhs_of_flat_connection(flat):
    _, acceleration = geodesic_rhs(flat, GeodesicState((1, 2), (3, 4)))
    np.testing.assert_allclose(acceleration, 0)


def test_rhs_of_hopf(hopf):
    velocity, acceleration = geodesic_rhs(hopf.connection, GeodesicState((1, 0), (1, 0)))
    np.testing.assert_allclose(velocity, [1, 0])
    np.testing.assert_allclose(acceleration, [-1, 0])


def test_rhs_of_scalar_connection(scalar_connection):
    _, acceleration = geodesic_rhs(scalar_connection(2), GeodesicState((1, 1), (1, 1)))
    np.testing.assert_allclose(acceleration, [-2, -2])


def test_flat_geodesic_is_a_line(flat):
    trajectory = integrate_geodesic(flat, GeodesicState((1, 0), (1, 1j)), 1.0)
    np.testing.assert_allclose(trajectory.endpoint.z, [2, 1j], atol=1e-9)
    np.testing.assert_allclose(trajectory.endpoint.v, [1, 1j], atol=1e-9)


def test_hopf_geodesic_squares_linearly(hopf):
    """z1^2 is affine in t along the radial geodesics"""
    trajectory = integrate_geodesic(hopf.connection, GeodesicState((1, 0), (0.5, 0)), 3.0)
    np.testing.assert_allclose(trajectory.endpoint.z, [2, 0], atol=1e-8)
    assert trajectory.nfev > 0


def test_exponential_geodesic(scalar_connection):
    trajectory = integrate_geodesic(scalar_connection(-1), GeodesicState((1, 1), (1, 0)), 1.0)
    np.testing.assert_allclose(trajectory.endpoint.z, [math.e, 1], rtol=1e-8)


def test_complex_time_polyline(flat):
    trajectory = integrate_geodesic(flat, GeodesicState((1, 0), (1, 0)), [1.0, 1.0 + 1j])
    assert trajectory.endpoint.t == pytest.approx(1 + 1j)
    np.testing.assert_allclose(trajectory.endpoint.z, [2 + 1j, 0], atol=1e-9)


def test_geodesic_halts_near_the_divisor(flat):
    with pytest.raises(PoleApproach) as info:
        integrate_geodesic(flat, GeodesicState((1, 0), (-1, 0)), 2.0)
    last = info.value.last_state
    assert abs(last.z[0]) < 1e-6
    assert last.t.real == pytest.approx(1, abs=1e-6)
    assert len(info.value.trajectory.times) > 1


def test_zero_velocity_is_rejected(flat):
    with pytest.raises(ValidationError):
        integrate_geodesic(flat, GeodesicState((1, 0), (0, 0)), 1.0)


def test_hopf_distinguished_field(hopf):
    dfield = distinguished_field(hopf.connection, hopf.submodule_frame, (1, 0))
    z1, _, g11, _, g21, _ = dfield.chart.gens
    assert dfield.exponents == {'z1': 1}
    assert dfield.constant == 2
    assert dfield.monomial == 2 * hopf.chart.var(0)
    assert dfield.components[0] == g11
    assert dfield.components[1] == 2 * z1 * g21
    assert not any(dfield.components[2:])


def test_flat_distinguished_field_needs_no_clearing(flat, plane):
    dfield = distinguished_field(flat, SubmoduleFrame.trivial(plane), (0, 1))
    assert dfield.exponents == {'z1': 0}
    assert dfield.constant == 1
    z, g = dfield((1, 2), np.eye(2))
    np.testing.assert_allclose(z, [0, 1])
    np.testing.assert_allclose(g, 0)


def test_distinguished_field_requires_branched(scalar_connection, plane):
    with pytest.raises(NotBranched):
        distinguished_field(scalar_connection(0.5), SubmoduleFrame.trivial(plane), (1, 0))


def test_distinguished_field_rejects_zero_direction(hopf):
    with pytest.raises(ValidationError):
        distinguished_field(hopf.connection, hopf.submodule_frame, (0, 0))


def test_hopf_curve_crosses_transversally(hopf):
    result = integrate_distinguished_curve(hopf.connection, hopf.submodule_frame, (1, 0),
                                           FrameBundlePoint.identity((-1, 0)), (0.0, 2.0))
    crossing = result.crossings['z1']
    assert crossing.parameter == pytest.approx(1, abs=1e-6)
    assert crossing.transversal
    assert crossing.slope == pytest.approx(1)
    assert result.contained_in == ()
    assert not result.frame_degenerate
    np.testing.assert_allclose(result.positions[-1], [1, 0], atol=1e-8)


def test_flat_curve_inside_the_divisor(flat, plane):
    result = integrate_distinguished_curve(flat, SubmoduleFrame.trivial(plane), (0, 1),
                                           FrameBundlePoint.identity((0, 0)), (0.0, 1.0))
    assert result.contained_in == ('z1',)
    assert result.crossing is None


def test_hopf_second_direction_is_not_transversal(hopf):
    result = integrate_distinguished_curve(hopf.connection, hopf.submodule_frame, (0, 1),
                                           FrameBundlePoint.identity((0, 0)), (0.0, 1.0))
    assert not result.transversal


def test_reparametrized_curve_is_a_geodesic(hopf):
    dfield = distinguished_field(hopf.connection, hopf.submodule_frame, (1, 0))
    result = integrate_distinguished_curve(hopf.connection, hopf.submodule_frame, (1, 0),
                                           FrameBundlePoint.identity((-1, 0.5)), (0.0, 2.0), dfield=dfield)
    assert reparametrized_residual(hopf.connection, dfield, result) < 1e-6


def test_singular_start_frame_is_rejected(hopf):
    with pytest.raises(ValidationError):
        integrate_distinguished_curve(hopf.connection, hopf.submodule_frame, (1, 0),
                                      FrameBundlePoint((1, 0), np.zeros((2, 2))))


@pytest.mark.parametrize('name, expected', [('hopf', True), ('nonspiral_c2', False), ('flat', True)])
def test_classify_bundled(store, name, expected):
    conn = store.get(name).connection
    assert classify_A01(conn, conn.chart.divisor[0]) is expected


def test_classify_pole_of_gamma_222(plane):
    z1 = plane.var(0)
    conn = ChartConnection.from_entries(plane, {(1, 1, 1): 1 / z1})
    assert classify_A01(conn, plane.divisor[0]) is False


def test_classify_needs_a_surface(store):
    conn = store.get('hopf3').connection
    with pytest.raises(UnsupportedComponent):
        classify_A01(conn, conn.chart.divisor[0])


def test_strong_spiral_directions(hopf):
    component = hopf.chart.divisor[0]
    assert strong_spiral_test(hopf.connection, hopf.submodule_frame, component, (1, 0))
    assert not strong_spiral_test(hopf.connection, hopf.submodule_frame, component, (0, 1))


@pytest.mark.parametrize('name', ['hopf', 'flat'])
def test_spiral_search_finds_the_radial_witness(store, name, rng):
    spec = store.get(name)
    witness = spiral_search(spec.connection, spec.submodule_frame, spec.chart.divisor[0], rng=rng)
    assert witness is not None
    assert witness.direction == (1, 0)
    assert witness.crossing.transversal


def test_spiral_verdict_on_hopf(hopf):
    verdict = spiral_verdict(hopf.connection, hopf.submodule_frame, {'workers': 1})
    assert verdict.in_A01 == {'z1': True}
    assert verdict.strong_spiral == {'z1': True}
    assert [w.component for w in verdict.spiral_witnesses] == ['z1']
    assert verdict.to_dict()['spiral_witnesses'][0]['direction'] == [1, 0]


def test_divisor_geodesic_stays_on_the_component(flat):
    trajectory = divisor_geodesic(flat, flat.chart.divisor[0], (0, 1), t_end=2.0)
    np.testing.assert_allclose(trajectory.positions[:, 0], 0, atol=1e-12)
    np.testing.assert_allclose(trajectory.endpoint.z, [0, 3], atol=1e-9)


def test_divisor_geodesic_needs_A01(store):
    spec = store.get('nonspiral_c2')
    with pytest.raises(ValidationError):
        divisor_geodesic(spec.connection, spec.chart.divisor[0], (0, 1))


def test_trace_rows_header(plane):
    rows = trace_rows(plane, [0, 1j], [(1, 2), (3, 4j)])
    assert rows[0] == ['t_re', 't_im', 'z1_re', 'z1_im', 'z2_re', 'z2_im', 'q_z1_re', 'q_z1_im']
    assert len(rows) == 3
    assert rows[2][:2] == ['0.0', '1.0']


def test_trace_rows_without_divisor():
    chart = Chart(('x',))
    rows = trace_rows(chart, [0.5], [(2,)])
    assert rows == [['t_re', 't_im', 'x_re', 'x_im'], ['0.5', '0.0', '2.0', '0.0']]


def test_double_pole_halts_with_the_last_safe_state(plane):
    z1 = plane.var(0)
    conn = ChartConnection.from_entries(plane, {(1, 0, 0): 1 / z1 ** 2})
    with pytest.raises(PoleApproach) as info:
        integrate_geodesic(conn, GeodesicState((1, 0), (-1, 0)), 2.0)
    last = info.value.last_state
    assert 0 < abs(last.z[0]) < 1e-3
    assert last.t.real == pytest.approx(1, abs=1e-3)
    assert np.all(np.diff(info.value.trajectory.times.real) > 0)


def test_flat_distinguished_curves_are_straight_lines(flat, plane):
    g = np.array([[2, 1j], [0, 1]])
    frame = SubmoduleFrame.trivial(plane)
    dfield = distinguished_field(flat, frame, (1, 1))
    result = integrate_distinguished_curve(flat, frame, (1, 1), FrameBundlePoint((1, 2), g), (0.0, 1.5),
                                           dfield=dfield)
    expected = np.array([1, 2]) + np.outer(result.parameters, g @ np.array([1, 1]))
    np.testing.assert_allclose(result.positions, expected, atol=1e-10)
    assert reparametrized_residual(flat, dfield, result) < 1e-10


@pytest.mark.parametrize('name, direction', [('flat', (1, 0)), ('flat', (1, 1)), ('hopf', (1, 0))])
def test_bundled_distinguished_curves_are_geodesics(store, name, direction):
    spec = store.get(name)
    dfield = distinguished_field(spec.connection, spec.submodule_frame, direction)
    result = integrate_distinguished_curve(spec.connection, spec.submodule_frame, direction,
                                           FrameBundlePoint.identity((-1, 0.5)), (0.0, 2.0), dfield=dfield)
    assert reparametrized_residual(spec.connection, dfield, result) < 1e-6


def test_geodesic_and_distinguished_curve_agree(hopf):
    """With dt/ds = h the projected curve z(s) is the geodesic z(t(s))"""
    conn = hopf.connection
    dfield = distinguished_field(conn, hopf.submodule_frame, (1, 0))
    start = FrameBundlePoint((1, 0.5), np.array([[1, 0], [0.25, 1]]))
    S = 0.5
    result = integrate_distinguished_curve(conn, hopf.submodule_frame, (1, 0), start, (0.0, S), dfield=dfield)
    sol = result.solution

    def h(s):
        return dfield.monomial_evaluator(sol.sol(s)[:2])[0]

    T, _ = quad(h, 0.0, S, complex_func=True, epsabs=1e-12, epsrel=1e-12)
    velocity = dfield.vector(start.vector())[:2] / h(0.0)
    trajectory = integrate_geodesic(conn, GeodesicState(start.z, velocity), T)
    np.testing.assert_allclose(trajectory.endpoint.z, sol.sol(S)[:2], atol=1e-7)


def test_classify_pole_of_gamma_222_on_another_component():
    chart = Chart(('z1', 'z2'))
    chart = chart.with_divisor([chart.component('z1', 1, 'z1'), chart.component('z2', 1, 'z2')])
    conn = ChartConnection.from_entries(chart, {(1, 1, 1): 1 / chart.var(1)})
    assert classify_A01(conn, chart.divisor[0]) is False
    assert classify_A01(ChartConnection.flat(chart), chart.divisor[0]) is True
