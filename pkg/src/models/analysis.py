"""Pipeline orchestration: run the stages a command asks for and collect an AnalysisReport."""
import logging
from dataclasses import dataclass, field

import numpy as np

from src import __version__
from src.config import settings
from src.models.connection import (
    cartan_structure_functions,
    curvature,
    forces_spiral,
    is_branched,
    torsion,
    tractor_curvature_trace,
)
from src.models.errors import ConnscopeError, NotBranched, NotInvariant, NumericError, PoleApproach, ValidationError
from src.models.geodesic import (
    FrameBundlePoint,
    GeodesicState,
    component_base_points,
    distinguished_field,
    integrate_distinguished_curve,
    integrate_geodesic,
    reparametrized_residual,
    spiral_verdict,
    strong_spiral_test,
    trace_rows,
)
from src.models.killing import (
    KillingJet,
    build_prolonged_system,
    killing_ansatz,
    killing_subspace_at,
    spans_tangent_space,
)
from src.models.monodromy import extension_property, quotient_monodromy, restrict
from src.models.rational import format_rational, random_point, to_complex

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TOOL = 'connscope'

COMMANDS = {
    'analyze': ('torsion', 'curvature', 'branched', 'cartan', 'tractor', 'spiral', 'killing', 'monodromy'),
    'report': ('torsion', 'curvature', 'branched', 'cartan', 'tractor', 'spiral', 'killing', 'monodromy'),
    'torsion': ('torsion',),
    'curvature': ('curvature', 'branched'),
    'geodesic': ('geodesic',),
    'distinguished': ('branched', 'distinguished'),
    'spiral': ('branched', 'spiral'),
    'killing': ('killing',),
    'monodromy': ('monodromy',),
}

# Commands that keep going after a failed stage and report it
COLLECTING = ('analyze', 'report')


@dataclass
class AnalysisReport:
    scenario: str
    command: str
    seed: int
    config: dict
    sections: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    expectations: list = field(default_factory=list)
    components: tuple = ()

    @property
    def exit_code(self):
        codes = [e['exit_code'] for e in self.errors]
        if codes:
            return max(codes)
        if any(not e['ok'] for e in self.expectations):
            return 4
        return 0

    def to_dict(self):
        data = {
            'schema_version': SCHEMA_VERSION,
            'tool': TOOL,
            'version': __version__,
            'scenario': self.scenario,
            'command': self.command,
            'seed': self.seed,
            'config': dict(sorted(self.config.items())),
        }
        data.update(self.sections)
        if self.errors:
            data['errors'] = self.errors
        if self.expectations:
            data['expectations'] = self.expectations
        return data


def _index_key(index):
    return ','.join(str(x + 1) for x in index)


def _basis_label(j):
    return f'e{j + 1}'


class Analysis:
    """State shared by the stages of one run (connection, frame, basepoint, rng)"""

    def __init__(self, spec, options, config):
        self.spec = spec
        self.options = options
        self.config = config
        self.conn = spec.connection
        self.frame = spec.submodule_frame
        self.rng = np.random.default_rng(config['seed'])
        self._branched = None
        self._prolonged = None
        self._subspace = None
        self._basepoint = None
        self.traces = {}

    @property
    def basepoint(self):
        if self._basepoint is None:
            given = self.options.get('basepoint') or self.spec.basepoint_values
            if given is not None:
                self._basepoint = np.asarray(given, dtype=complex)
            else:
                point = random_point(self.conn.chart, self.rng, clearance=self.config['pole_free_margin'])
                self._basepoint = np.asarray([to_complex(c) for c in point])
                logger.info('no basepoint declared, sampled %s', self._basepoint)
        return self._basepoint

    @property
    def branched(self):
        if self._branched is None:
            self._branched = is_branched(self.conn, self.frame)
        return self._branched

    @property
    def prolonged(self):
        if self._prolonged is None:
            self._prolonged = build_prolonged_system(self.conn)
        return self._prolonged

    @property
    def subspace(self):
        if self._subspace is None:
            self._subspace = killing_subspace_at(self.prolonged, self.basepoint, self.config, self.rng)
        return self._subspace

    # Stages

    def torsion_section(self):
        T = torsion(self.conn)
        nonzero = T.nonzero_entries()
        return {
            'operation': 'torsion',
            'zero': T.is_zero,
            'constant': all(e.numer.is_ground and e.denom.is_ground for e in nonzero.values()),
            'nonzero': {_index_key(k): format_rational(v) for k, v in nonzero.items()},
        }

    def curvature_section(self):
        R = curvature(self.conn.system)
        return {
            'operation': 'curvature',
            'zero': R.is_zero,
            'nonzero': {_index_key(k): format_rational(v) for k, v in R.nonzero_entries().items()},
        }

    def branched_section(self):
        check = self.branched
        return {
            'operation': 'is_branched',
            'value': check.branched,
            'frame_declared': self.spec.has_frame,
            'offending': list(check.offending),
        }

    def cartan_section(self):
        if not self.branched:
            return {'operation': 'cartan_structure_functions', 'skipped': 'not branched'}
        kappa = cartan_structure_functions(self.conn, self.frame, self.basepoint, self.config['eval_floor'])
        return {
            'operation': 'cartan_structure_functions',
            'basepoint': self.basepoint,
            'zero': bool(np.all(np.abs(kappa) < self.config['rank_tol'])),
            'kappa': kappa,
            'tolerance': self.config['rank_tol'],
        }

    def tractor_section(self):
        if not self.branched:
            return {'operation': 'tractor_curvature_trace', 'skipped': 'not branched'}
        trace = tractor_curvature_trace(self.conn, self.frame)
        return {
            'operation': 'tractor_curvature_trace',
            'zero': all(not e for row in trace for e in row),
            'trace': [[format_rational(e) for e in row] for row in trace],
        }

    def spiral_section(self):
        config = self.config
        if not self.conn.chart.divisor:
            return {'operation': 'spiral_verdict', 'skipped': 'no divisor'}
        if not self.branched:
            if self.options.get('strict'):
                raise NotBranched('Connection is not branched for this frame: '
                                  + ', '.join(self.branched.offending[:4]))
            return {'operation': 'spiral_verdict', 'skipped': 'not branched'}
        verdict = spiral_verdict(self.conn, self.frame, config)
        witnesses = {w.component: w for w in verdict.spiral_witnesses}
        n = self.conn.n
        components = {}
        for q in self.conn.chart.divisor:
            witness = witnesses.get(q.label)
            entry = {
                'in_A01': verdict.in_A01[q.label],
                'spiral': witness is not None,
                'witness': None,
                'strong_spiral': verdict.strong_spiral[q.label],
                'strong_spiral_by_direction': {
                    _basis_label(j): strong_spiral_test(self.conn, self.frame, q,
                                                        tuple(int(k == j) for k in range(n)))
                    for j in range(n)
                },
            }
            if witness is not None:
                entry['witness'] = {
                    'operation': 'spiral_search',
                    'base': witness.base,
                    'direction': list(witness.direction),
                    'crossing_parameter': witness.crossing.parameter,
                    'crossing_point': witness.crossing.point,
                    'crossing_slope': witness.crossing.slope,
                    'transversal': witness.crossing.transversal,
                    'tolerance': config['transversality_tol'],
                }
            if n == 2:
                forced, failures = forces_spiral(self.frame, q)
                entry['forces_spiral'] = forced
                entry['pole_form_failures'] = [f'E{a + 1}{b + 1}' for (a, b), _ in failures]
            components[q.label] = entry
        return {
            'operation': 'spiral_verdict',
            'components': components,
            'tolerance': config['transversality_tol'],
        }

    def killing_section(self):
        config = self.config
        ansatz = killing_ansatz(self.conn, config['ansatz_degree'], config['ansatz_pole_order'])
        subspace = self.subspace
        chart = self.conn.chart
        in_subspace = all(subspace.contains(KillingJet.of_field(chart, X, self.basepoint).vector(),
                                            config['subspace_angle_tol'])
                          for X in ansatz.fields)
        return {
            'operation': 'killing_subspace_at',
            'basepoint': self.basepoint,
            'ansatz_dimension': ansatz.dimension,
            'ansatz_degree': ansatz.degree,
            'ansatz_pole_order': ansatz.pole_order,
            'ansatz_fields': [[format_rational(x) for x in X] for X in ansatz.fields],
            'ansatz_jets_in_subspace': in_subspace,
            'subspace_dimension': subspace.dimension,
            'generic_dimension': subspace.generic_dimension,
            'generic_diagnostic': subspace.diagnostic or None,
            'obstruction_ranks': subspace.obstruction_ranks,
            'spans_tangent_space': spans_tangent_space(subspace, config),
            'basis': [{'X': jet.X, 'A': jet.A} for jet in subspace.jets],
            'tolerance': config['rank_tol'],
        }

    def monodromy_section(self):
        config = self.config
        kind = self.options.get('system', 'killing')
        if kind not in ('killing', 'connection'):
            raise ValidationError(f'Unknown system {kind!r} (killing or connection)')
        if not self.conn.chart.divisor:
            return {'operation': 'extension_property', 'system': kind, 'extends': True, 'components': {},
                    'tolerance': config['monodromy_trivial_tol']}
        system = self.prolonged.base if kind == 'killing' else self.conn.system
        verdict = extension_property(system, self.basepoint, None, config)
        subspace = self.subspace if kind == 'killing' else None
        tol = config['monodromy_trivial_tol']
        components = {}
        for label, c in verdict.components.items():
            entry = {
                'matrix': c.monodromy.M,
                'distance': c.distance,
                'trivial': c.trivial_local_monodromy,
                'condition': c.monodromy.condition,
                'steps': c.monodromy.steps,
                'radius': c.monodromy.loop.radius,
                'residue': self._residue_entry(c.residue),
                'diagnostic': c.diagnostic,
            }
            if subspace is not None:
                entry.update(self._restricted_entry(c.monodromy.M, subspace.basis))
            components[label] = entry
        section = {
            'operation': 'extension_property',
            'system': kind,
            'extends': verdict.extends,
            'components': components,
            'tolerance': tol,
        }
        if subspace is not None:
            section['killing_dimension'] = subspace.dimension
            section['extends_on_killing_subspace'] = all(c.get('trivial_on_killing_subspace', False)
                                                        for c in components.values())
            section['quotient'] = self._quotients(system, verdict, subspace)
        return section

    def _residue_entry(self, residue):
        entry = {'operation': 'residue_criterion', 'predicted_trivial': residue.predicted_trivial,
                 'inconclusive': residue.inconclusive, 'reason': residue.reason,
                 'tolerance': self.config['integrality_tol']}
        if residue.data is not None:
            entry['eigenvalues'] = residue.data.eigenvalues
            entry['diagonalizable'] = residue.data.diagonalizable
            entry['sample_point'] = residue.data.sample_point
        return entry

    def _restricted_entry(self, M, basis):
        if basis.shape[1] == 0:
            return {'restricted_distance': 0.0, 'trivial_on_killing_subspace': True}
        try:
            restricted = restrict(M, basis, self.config)
        except NotInvariant as e:
            return {'restricted_error': str(e), 'trivial_on_killing_subspace': False}
        distance = float(np.linalg.norm(restricted - np.eye(restricted.shape[0]), 2))
        return {
            'restricted_distance': distance,
            'trivial_on_killing_subspace': distance < self.config['monodromy_trivial_tol'],
        }

    def _quotients(self, system, verdict, subspace):
        """Induced map on g/<e_j> for every translation direction, per component"""
        n = self.conn.n
        found = {}
        for label, c in verdict.components.items():
            per_direction = {}
            for j in range(n):
                A = np.zeros(system.rank, dtype=complex)
                A[j] = 1.0
                try:
                    q = quotient_monodromy(system, A, c.monodromy.loop, subspace, self.config)
                    per_direction[_basis_label(j)] = {'operation': 'quotient_monodromy',
                                                      'distance': q.distance, 'trivial': q.trivial}
                except NumericError as e:
                    per_direction[_basis_label(j)] = {'operation': 'quotient_monodromy', 'error': str(e)}
            found[label] = per_direction
        return found

    def geodesic_section(self):
        config = self.config
        n = self.conn.n
        z = self.options.get('z')
        z = self.basepoint if z is None else np.asarray(z, dtype=complex)
        v = self.options.get('v')
        v = np.eye(n, dtype=complex)[0] if v is None else np.asarray(v, dtype=complex)
        t_path = self.options.get('t_path') or [complex(self.options.get('t_end', 1.0))]
        section = {'operation': 'integrate_geodesic', 'start': z, 'velocity': v,
                   'tolerance': config['geodesic_rtol']}
        try:
            trajectory = integrate_geodesic(self.conn, GeodesicState(z, v), t_path, config)
        except PoleApproach as e:
            if e.trajectory is not None:
                self._geodesic_trace(e.trajectory)
            raise
        self._geodesic_trace(trajectory)
        end = trajectory.endpoint
        section.update({'halted': False, 'endpoint': end.z, 'end_velocity': end.v, 't': end.t,
                        'steps': len(trajectory.times) - 1, 'nfev': trajectory.nfev})
        return section

    def _geodesic_trace(self, trajectory):
        self.traces['geodesic'] = trace_rows(self.conn.chart, trajectory.times, trajectory.positions)

    def distinguished_section(self):
        config = self.config
        n = self.conn.n
        if not self.branched:
            raise NotBranched('Connection is not branched for this frame: ' + ', '.join(self.branched.offending[:4]))
        A = tuple(self.options.get('direction') or [1] + [0] * (n - 1))
        z = self.options.get('z')
        if z is None:
            divisor = self.conn.chart.divisor
            if divisor:
                z = component_base_points(self.conn.chart, divisor[0], self.rng, 1, config)[0]
            else:
                z = self.basepoint
        span = float(self.options.get('span', 1.0))
        dfield = distinguished_field(self.conn, self.frame, A)
        start = FrameBundlePoint.identity(z)
        result = integrate_distinguished_curve(self.conn, self.frame, A, start, (0.0, span), config, dfield)
        self.traces['distinguished'] = trace_rows(self.conn.chart, result.parameters, result.positions)
        crossings = {
            label: {'parameter': c.parameter, 'point': c.point, 'slope': c.slope, 'transversal': c.transversal}
            for label, c in result.crossings.items()
        }
        return {
            'operation': 'integrate_distinguished_curve',
            'direction': list(A),
            'start': start.z,
            'span': span,
            'clearing_exponents': dfield.exponents,
            'clearing_constant': dfield.constant,
            'clearing_monomial': format_rational(dfield.monomial),
            'crossings': crossings,
            'contained_in': list(result.contained_in),
            'frame_degenerate': result.frame_degenerate,
            'steps': len(result.parameters) - 1,
            'residual': reparametrized_residual(self.conn, dfield, result, config),
            'tolerance': config['transversality_tol'],
            'residual_tolerance': config['residual_tol'],
        }

    STAGES = {
        'torsion': torsion_section,
        'curvature': curvature_section,
        'branched': branched_section,
        'cartan': cartan_section,
        'tractor': tractor_section,
        'spiral': spiral_section,
        'killing': killing_section,
        'monodromy': monodromy_section,
        'geodesic': geodesic_section,
        'distinguished': distinguished_section,
    }


def run_analysis(spec, command, options=None, config=None):
    """Run the stages of `command` on a validated spec"""
    if command not in COMMANDS:
        raise ValidationError(f'Unknown command {command!r}; expected one of {", ".join(COMMANDS)}')
    config = settings(config)
    options = dict(options or {})
    options.setdefault('strict', command not in COLLECTING)
    analysis = Analysis(spec, options, config)
    report = AnalysisReport(spec.name, command, config['seed'], config,
                            components=tuple(q.label for q in spec.chart.divisor))
    report.traces = analysis.traces
    for stage in COMMANDS[command]:
        logger.info('%s: stage %s', spec.name, stage)
        try:
            report.sections[stage] = Analysis.STAGES[stage](analysis)
        except ConnscopeError as e:
            if command not in COLLECTING:
                e.report = report
                raise
            logger.warning('%s: stage %s failed: %s', spec.name, stage, e)
            report.errors.append({'stage': stage, 'error': str(e), 'type': type(e).__name__,
                                  'exit_code': e.exit_code})
    return report


def _lookup(data, path):
    for part in path.split('.'):
        if not isinstance(data, dict) or part not in data:
            raise KeyError(path)
        data = data[part]
    return data


def _matches(actual, expected):
    if isinstance(expected, str) and expected.startswith('>='):
        return isinstance(actual, (int, float)) and not isinstance(actual, bool) and actual >= float(expected[2:])
    if isinstance(expected, bool) or isinstance(actual, bool):
        return actual is expected
    if isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
        return abs(actual - expected) <= 1e-6 * max(1.0, abs(expected))
    return str(actual) == str(expected)


def check_expectations(report, expectations):
    """Compare [expect] entries of the sections this run computed; fills report.expectations"""
    results = []
    for e in expectations:
        if e.key.split('.', 1)[0] not in report.sections:
            continue
        try:
            actual = _lookup(report.sections, e.key)
        except KeyError:
            actual = None
            ok = False
        else:
            ok = _matches(actual, e.value)
        if isinstance(actual, (dict, list, np.ndarray)):
            actual = None
            ok = False
        results.append({'key': e.key, 'expected': e.value, 'actual': actual, 'provenance': e.provenance, 'ok': ok})
        if not ok:
            logger.warning('expectation %s: expected %r, got %r', e.key, e.value, actual)
    report.expectations = results
    return [f'{r["key"]}: expected {r["expected"]!r}, got {r["actual"]!r}' for r in results if not r['ok']]
