import numpy as np
import pytest

from src.models import killing
from src.models.connection import entries
from src.models.errors import ValidationError
from src.models.killing import (
    KillingJet,
    build_prolonged_system,
    evaluate_killing_field,
    is_horizontal,
    jet_index,
    killing_ansatz,
    killing_oracle,
    killing_subspace_at,
    spans_tangent_space,
    transport_killing_jet,
    transport_subspace,
)
from src.models.rational import parse_expression, poles_only_on
from src.models.transport import Path


def _field(chart, *texts):
    return [parse_expression(t, chart) for t in texts]


@pytest.fixture(scope='module')
def hopf_prolonged(hopf):
    return build_prolonged_system(hopf.connection)


@pytest.mark.parametrize('texts, expected', [
    (('1', '0'), True),
    (('z1 + 2*z2', '3 - z1'), True),
    (('z1^2', '0'), False),
    (('0', 'z1*z2'), False),
])
def test_oracle_on_flat(flat, texts, expected):
    assert killing_oracle(flat, _field(flat.chart, *texts)).is_killing is expected


@pytest.mark.parametrize('texts, expected', [
    (('1/(2*z1)', '0'), True),
    (('z1', '0'), True),
    (('z2/(2*z1)', 'z1^2'), True),
    (('0', '1'), True),
    (('1', '0'), False),
    (('0', 'z1'), False),
])
def test_oracle_on_hopf(hopf, texts, expected):
    X = _field(hopf.chart, *texts)
    assert killing_oracle(hopf.connection, X).is_killing is expected


def test_oracle_residual_is_exact(hopf):
    result = killing_oracle(hopf.connection, _field(hopf.chart, '1', '0'))
    assert result.residual[(0, 0, 0)]
    assert not result.residual[(1, 1, 1)]


@pytest.mark.parametrize('texts', [('1', '0', 'z2'), ('0', '1', '0'), ('0', '0', '1')])
def test_heisenberg_frame_fields_are_killing(heisenberg, texts):
    assert killing_oracle(heisenberg.connection, _field(heisenberg.chart, *texts)).is_killing


def test_oracle_rejects_wrong_length(flat):
    with pytest.raises(ValidationError):
        killing_oracle(flat, _field(flat.chart, '1'))


@pytest.mark.parametrize('texts', [('1/(2*z1)', '0'), ('z1', '0'), ('1', '0'), ('0', 'z1')])
def test_horizontal_jets_are_killing_fields(hopf, hopf_prolonged, texts):
    X = _field(hopf.chart, *texts)
    assert is_horizontal(hopf_prolonged, X) is killing_oracle(hopf.connection, X).is_killing


def test_prolonged_system_has_poles_on_the_divisor_only(scalar_connection, plane):
    prolonged = build_prolonged_system(scalar_connection(0.5))
    assert prolonged.rank == 6
    for P in prolonged.base.matrices:
        assert all(poles_only_on(e, plane.divisor) for row in entries(P) for e in row)


def test_jet_index():
    assert jet_index(2, 0, 0) == 2
    assert jet_index(2, 1, 0) == 4
    assert jet_index(3, 2, 2) == 11


def test_jet_vector_length_is_checked():
    with pytest.raises(ValidationError):
        KillingJet.from_vector(np.zeros(5), 2)


@pytest.mark.slow
@pytest.mark.parametrize('name', ['flat', 'hopf'])
def test_ansatz_dimension(store, name):
    result = killing_ansatz(store.get(name).connection)
    assert result.dimension == 6
    assert all(killing_oracle(store.get(name).connection, X).is_killing for X in result.fields)


@pytest.mark.parametrize('name', ['flat', 'hopf'])
def test_subspace_dimension(store, name):
    spec = store.get(name)
    subspace = killing_subspace_at(build_prolonged_system(spec.connection), (1, 1))
    assert subspace.dimension == 6
    assert subspace.generic_dimension == 6
    assert spans_tangent_space(subspace)


def test_heisenberg_subspace(heisenberg):
    prolonged = build_prolonged_system(heisenberg.connection)
    subspace = killing_subspace_at(prolonged, heisenberg.basepoint_values)
    assert subspace.dimension >= 3
    assert spans_tangent_space(subspace)
    for texts in (('1', '0', 'z2'), ('0', '1', '0'), ('0', '0', '1')):
        jet = KillingJet.of_field(heisenberg.chart, _field(heisenberg.chart, *texts), subspace.basepoint)
        assert subspace.contains(jet.vector())


def test_hopf_field_jets_lie_in_the_subspace(hopf, hopf_prolonged):
    point = (1, 1)
    subspace = killing_subspace_at(hopf_prolonged, point)
    for texts in (('1/(2*z1)', '0'), ('z2/(2*z1)', 'z1^2')):
        jet = KillingJet.of_field(hopf.chart, _field(hopf.chart, *texts), point)
        assert subspace.contains(jet.vector())


def test_evaluate_hopf_field(hopf, hopf_prolonged):
    jet = KillingJet.of_field(hopf.chart, _field(hopf.chart, 'z1', '0'), (1, 0))
    samples = evaluate_killing_field(hopf_prolonged, jet, Path.polyline([(1, 0), (2, 0)]))
    point, X = samples[-1]
    np.testing.assert_allclose(point, [2, 0])
    np.testing.assert_allclose(X, [2, 0], atol=1e-8)
    assert len(samples) == 9


def test_evaluate_rotation_field(flat):
    prolonged = build_prolonged_system(flat)
    jet = KillingJet.of_field(flat.chart, _field(flat.chart, '-z2', 'z1'), (1, 0))
    samples = evaluate_killing_field(prolonged, jet, Path.polyline([(1, 0), (1, 1)]), per_segment=4)
    np.testing.assert_allclose(samples[-1][1], [-1, 1], atol=1e-8)


def test_transport_is_linear(hopf_prolonged, rng):
    path = Path.polyline([(1, 1), (1.5, 1 + 0.5j)])
    a = rng.normal(size=6) + 1j * rng.normal(size=6)
    b = rng.normal(size=6) + 1j * rng.normal(size=6)
    combined = transport_killing_jet(hopf_prolonged, path, 2 * a - 3j * b).vector()
    separate = (2 * transport_killing_jet(hopf_prolonged, path, a).vector()
                - 3j * transport_killing_jet(hopf_prolonged, path, b).vector())
    np.testing.assert_allclose(combined, separate, atol=1e-8)


def test_homotopic_paths_agree_on_the_subspace(hopf_prolonged):
    subspace = killing_subspace_at(hopf_prolonged, (1, 1))
    straight = Path.polyline([(1, 1), (2, 1)])
    bent = Path.polyline([(1, 1), (1.5, 1 + 1j), (2, 1)])
    for jet in subspace.jets:
        one = transport_killing_jet(hopf_prolonged, straight, jet).vector()
        other = transport_killing_jet(hopf_prolonged, bent, jet).vector()
        np.testing.assert_allclose(one, other, atol=1e-7)


def test_transported_subspace_matches_the_endpoint(hopf_prolonged):
    subspace = killing_subspace_at(hopf_prolonged, (1, 1))
    moved, target, angles = transport_subspace(hopf_prolonged, Path.polyline([(1, 1), (2, 1 + 1j)]), subspace)
    assert moved.shape == subspace.basis.shape
    assert target.dimension == subspace.dimension
    assert np.max(angles) < 1e-6


def test_stabilization_needs_two_repeats(flat):
    subspace = killing_subspace_at(build_prolonged_system(flat), (1, 1))
    assert subspace.obstruction_ranks == [0, 0, 0]
    assert subspace.diagnostic == ''


def test_dimension_disagreement_is_reported(flat, monkeypatch):
    measure = killing._subspace_dimension
    calls = []

    def smaller_at_the_basepoint(prolonged, point, config):
        basis, ranks = measure(prolonged, point, config)
        calls.append(point)
        return (basis[:, :5], ranks) if len(calls) == 1 else (basis, ranks)

    monkeypatch.setattr(killing, '_subspace_dimension', smaller_at_the_basepoint)
    subspace = killing_subspace_at(build_prolonged_system(flat), (1, 1))
    assert subspace.dimension == 5
    assert subspace.generic_dimension == 6
    assert 'differs from 6' in subspace.diagnostic
