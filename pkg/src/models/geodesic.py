"""Geodesics, distinguished curves on the frame bundle, and the spiral dichotomy."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar
from sympy.polys.domains import QQ_I

from src.config import settings
from src.models.connection import (
    entries,
    require_branched,
    straighten,
    straightened_connection,
)
from src.models.errors import (
    NearPoleEvaluation,
    PoleApproach,
    StepUnderflow,
    UnsupportedComponent,
    ValidationError,
)
from src.models.rational import (
    Chart,
    NumericEvaluator,
    gaussian,
    order_along,
    partial,
    random_rational,
    substitute,
    to_complex,
)

logger = logging.getLogger(__name__)


@dataclass
class GeodesicState:
    z: np.ndarray
    v: np.ndarray
    t: complex = 0j

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=complex)
        self.v = np.asarray(self.v, dtype=complex)
        self.t = complex(self.t)


@dataclass
class FrameBundlePoint:
    z: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=complex)
        self.g = np.asarray(self.g, dtype=complex)
        if self.g.shape != (self.z.size, self.z.size):
            raise ValidationError('Frame must be an n x n matrix')

    @classmethod
    def identity(cls, z):
        z = np.asarray(z, dtype=complex)
        return cls(z, np.eye(z.size, dtype=complex))

    def vector(self):
        return np.concatenate([self.z, self.g.reshape(-1)])


@dataclass
class Trajectory:
    """Accepted integration steps; `states` rows are (z, v) or (z, g)"""
    times: np.ndarray
    states: np.ndarray
    nvars: int
    nfev: int = 0

    @property
    def positions(self):
        return self.states[:, :self.nvars]

    @property
    def velocities(self):
        return self.states[:, self.nvars:2 * self.nvars]

    @property
    def endpoint(self):
        return GeodesicState(self.positions[-1], self.velocities[-1], self.times[-1])


def trace_rows(chart, times, positions):
    """CSV rows: t, the coordinates and the divisor polynomial values, split in re/im"""
    header = ['t_re', 't_im']
    for name in chart.var_names:
        header += [f'{name}_re', f'{name}_im']
    for q in chart.divisor:
        header += [f'q_{q.label}_re', f'q_{q.label}_im']
    rows = [header]
    divisor = NumericEvaluator(chart, chart.divisor_fractions(), floor=0.0) if chart.divisor else None
    for t, z in zip(times, positions):
        values = [complex(t)] + [complex(x) for x in z]
        if divisor is not None:
            values += list(divisor(z))
        row = []
        for value in values:
            row += [repr(value.real), repr(value.imag)]
        rows.append(row)
    return rows


def _guard(chart, z, threshold):
    if chart.divisor:
        modulus = float(np.min(chart.divisor_moduli(z)))
        if modulus < threshold:
            raise NearPoleEvaluation(f'divisor modulus {modulus:.3e} below {threshold:.1e}',
                                     point=tuple(z), modulus=modulus)


def geodesic_rhs(conn, state, config=None):
    """(z', v') with v'^k = -Gamma^k_ij(z) v^i v^j"""
    config = settings(config)
    _guard(conn.chart, state.z, config['pole_guard'])
    G = conn.numeric_gamma(state.z)
    return state.v.copy(), -np.einsum('kij,i,j->k', G, state.v, state.v)


def _time_waypoints(start, t_path):
    if np.ndim(t_path) == 0:
        return [complex(start), complex(t_path)]
    return [complex(start)] + [complex(t) for t in t_path]


def integrate_geodesic(conn, initial, t_path, config=None):
    """Geodesic along the complex-time polyline initial.t -> t_path (RK 5(4))"""
    config = settings(config)
    n = conn.n
    if not np.any(initial.v):
        raise ValidationError('A geodesic needs a nonzero initial velocity')
    _guard(conn.chart, initial.z, config['pole_halt'])
    chart = conn.chart
    waypoints = _time_waypoints(initial.t, t_path)
    y = np.concatenate([initial.z, initial.v])
    times, states, nfev = [waypoints[0]], [y], 0
    for t0, t1 in zip(waypoints, waypoints[1:]):
        direction = t1 - t0

        def rhs(s, y, direction=direction):
            G = conn.numeric_gamma(y[:n])
            v = y[n:]
            return np.concatenate([direction * v, -direction * np.einsum('kij,i,j->k', G, v, v)])

        accepted = [(0.0, y)]

        def near_pole(s, y, accepted=accepted):
            accepted.append((s, y.copy()))
            return float(np.min(chart.divisor_moduli(y[:n]))) - config['pole_halt']

        near_pole.terminal = True
        events = [near_pole] if chart.divisor else None
        try:
            sol = solve_ivp(rhs, (0.0, 1.0), y, method='RK45', rtol=config['geodesic_rtol'],
                            atol=config['geodesic_atol'], events=events)
        except NearPoleEvaluation as e:
            # a trial stage hit the evaluation floor before the event saw the step
            s, last_y = accepted[-1]
            if s > 0.0:
                times.append(t0 + direction * s)
                states.append(last_y)
            trajectory = Trajectory(np.array(times), np.array(states), n, nfev)
            last = trajectory.endpoint
            logger.info('geodesic halted near the divisor at t = %s', last.t)
            raise PoleApproach(f'geodesic stage evaluation hit the divisor after t = {last.t}',
                               last_state=last, trajectory=trajectory) from e
        if sol.status < 0:
            raise StepUnderflow(f'geodesic: {sol.message}')
        nfev += sol.nfev
        times.extend(t0 + direction * sol.t[1:])
        states.extend(sol.y[:, 1:].T)
        if sol.status == 1:
            trajectory = Trajectory(np.array(times), np.array(states), n, nfev)
            last = trajectory.endpoint
            logger.info('geodesic halted near the divisor at t = %s', last.t)
            raise PoleApproach(f'geodesic reached the divisor guard at t = {last.t}',
                               last_state=last, trajectory=trajectory)
        y = sol.y[:, -1]
    logger.debug('geodesic integrated: %d steps, %d evaluations', len(times) - 1, nfev)
    return Trajectory(np.array(times), np.array(states), n, nfev)


# Distinguished curves

def _coefficient_lcm(fns):
    den = 1
    for f in fns:
        scale = f.denom.LC
        for coeff in f.numer.coeffs():
            value = QQ_I.quo(coeff, scale)
            for part in (value.x, value.y):
                den = math.lcm(den, int(part.denominator))
    return den


def _frame_names(n, taken):
    names = []
    for a, b in product(range(1, n + 1), repeat=2):
        name = f'g{a}{b}'
        while name in taken:
            name += '_'
        names.append(name)
    return names


@dataclass
class DistinguishedField:
    """The omega_0-constant field of A on (z, g)-space, multiplied by the clearing monomial"""
    base: Chart
    chart: Chart
    direction: tuple
    components: tuple
    monomial: object
    exponents: dict
    constant: int

    @property
    def n(self):
        return self.base.nvars

    @cached_property
    def evaluator(self):
        return NumericEvaluator(self.chart, self.components, floor=0.0)

    @cached_property
    def jacobian_evaluator(self):
        dim = self.chart.nvars
        fns = [partial(self.components[k], var) for k in range(self.n) for var in range(dim)]
        return NumericEvaluator(self.chart, fns, shape=(self.n, dim), floor=0.0)

    @cached_property
    def monomial_evaluator(self):
        fns = [self.monomial] + [partial(self.monomial, k) for k in range(self.n)]
        return NumericEvaluator(self.base, fns, floor=0.0)

    def vector(self, y):
        return self.evaluator(y)

    def __call__(self, z, g):
        values = self.vector(np.concatenate([np.asarray(z, complex), np.asarray(g, complex).reshape(-1)]))
        return values[:self.n], values[self.n:].reshape(self.n, self.n)

    def restricted(self, section):
        """z-part of the field on the section g = section (exact), as functions on the base chart"""
        n = self.n
        images = list(self.base.gens) + [self.base.lift(e) for e in section]
        return [substitute(self.components[k], images, self.base.field) for k in range(n)]


def distinguished_field(conn, frame, A):
    """z' = Q g A, g' = -(sum_i z'_i A'_i) g, cleared to order zero along each component"""
    check = require_branched(conn, frame)
    n = conn.n
    A = [gaussian(a) for a in A]
    if len(A) != n or all(not a for a in A):
        raise ValidationError('Direction A must be a nonzero vector of length n')
    base = conn.chart
    g_names = _frame_names(n, base.var_names)
    ext = Chart(base.var_names + tuple(g_names))
    ext = ext.with_divisor([ext.component(q.poly.as_expr(), q.multiplicity, q.label) for q in base.divisor])
    gens = ext.gens
    g = [[gens[n + a * n + b] for b in range(n)] for a in range(n)]
    Q = [[ext.lift(e) for e in row] for row in entries(frame.Q)]
    gA = [sum((g[a][b] * ext.field.ground_new(A[b]) for b in range(n)), ext.zero) for a in range(n)]
    zdot = [sum((Q[k][a] * gA[a] for a in range(n)), ext.zero) for k in range(n)]
    forms = [[[ext.lift(e) for e in row] for row in entries(M)] for M in check.frame_system.matrices]
    omega = [[sum((zdot[i] * forms[i][a][c] for i in range(n)), ext.zero) for c in range(n)] for a in range(n)]
    gdot = [-sum((omega[a][c] * g[c][b] for c in range(n)), ext.zero) for a in range(n) for b in range(n)]
    raw = zdot + gdot
    nonzero = [f for f in raw if f]
    monomial = ext.one
    exponents = {}
    for q in ext.divisor:
        exponent = -min(order_along(f, q) for f in nonzero)
        exponents[q.label] = exponent
        if exponent:
            monomial *= ext.field.new(q.poly) ** exponent
    cleared = [f * monomial for f in raw]
    constant = _coefficient_lcm([f for f in cleared if f])
    cleared = [f * constant for f in cleared]
    monomial = base.lift(monomial) * constant
    logger.debug('distinguished field for A = %s: clearing exponents %s, constant %d', A, exponents, constant)
    return DistinguishedField(base, ext, tuple(A), tuple(cleared), monomial, exponents, constant)


@dataclass
class Crossing:
    parameter: float
    point: np.ndarray
    slope: complex
    transversal: bool
    component: str = ''


@dataclass
class DistinguishedCurveResult:
    samples: list
    parameters: np.ndarray
    h_factor: np.ndarray
    crossings: dict = field(default_factory=dict)
    contained_in: tuple = ()
    frame_degenerate: bool = False
    solution: object = field(default=None, repr=False)

    @property
    def crossing(self):
        """First crossing along the curve, if any"""
        found = sorted(self.crossings.values(), key=lambda c: abs(c.parameter))
        return found[0] if found else None

    @property
    def transversal(self):
        return any(c.transversal for c in self.crossings.values())

    @property
    def positions(self):
        return np.array([p.z for p in self.samples])


def _locate_crossing(component, chart, dfield, sol, span, config):
    n = chart.nvars
    q = NumericEvaluator(chart, [chart.field.new(component.poly)], floor=0.0)
    grad = NumericEvaluator(chart, [partial(chart.field.new(component.poly), k) for k in range(n)], floor=0.0)

    def modulus(s):
        return abs(q(sol.sol(s)[:n])[0])

    grid = np.linspace(span[0], span[1], int(config['crossing_grid']))
    values = np.array([modulus(s) for s in grid])
    if values.max() < config['crossing_tol']:
        return 'contained'
    k = int(np.argmin(values))
    lo, hi = sorted((grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]))
    best = minimize_scalar(modulus, bounds=(lo, hi), method='bounded', options={'xatol': config['root_xtol']})
    s_star = float(best.x) if best.fun <= values[k] else float(grid[k])
    if modulus(s_star) > config['crossing_tol']:
        return None
    y = sol.sol(s_star)
    slope = complex(np.dot(grad(y[:n]), dfield.vector(y)[:n]))
    return Crossing(s_star, y[:n], slope, abs(slope) > config['transversality_tol'], component.label)


def integrate_distinguished_curve(conn, frame, A, start, t_span=(0.0, 1.0), config=None, dfield=None):
    """Integrate the pole-cleared field from `start`; valid across the divisor"""
    config = settings(config)
    dfield = dfield or distinguished_field(conn, frame, A)
    n = conn.n
    if abs(np.linalg.det(start.g)) < config['det_floor']:
        raise ValidationError('Start frame is not invertible')

    def rhs(s, y):
        return dfield.vector(y)

    def degenerate(s, y):
        return abs(np.linalg.det(y[n:].reshape(n, n))) - config['det_floor']

    degenerate.terminal = True
    sol = solve_ivp(rhs, t_span, start.vector(), method='RK45', rtol=config['geodesic_rtol'],
                    atol=config['geodesic_atol'], dense_output=True, events=[degenerate])
    if sol.status < 0:
        raise StepUnderflow(f'distinguished curve: {sol.message}')
    samples = [FrameBundlePoint(y[:n], y[n:].reshape(n, n)) for y in sol.y.T]
    h_factor = np.array([dfield.monomial_evaluator(p.z)[0] for p in samples])
    result = DistinguishedCurveResult(samples, sol.t, h_factor, frame_degenerate=sol.status == 1, solution=sol)
    span = (sol.t[0], sol.t[-1])
    contained = []
    for component in conn.chart.divisor:
        found = _locate_crossing(component, conn.chart, dfield, sol, span, config)
        if found == 'contained':
            contained.append(component.label)
        elif found is not None:
            result.crossings[component.label] = found
    result.contained_in = tuple(contained)
    logger.debug('distinguished curve: %d steps, crossings %s, contained in %s',
                 len(sol.t) - 1, list(result.crossings), contained)
    return result


def reparametrized_residual(conn, dfield, result, config=None):
    """Largest residual of z'' - (h'/h) z' + Gamma(z', z') over pole-free samples"""
    config = settings(config)
    n = conn.n
    worst = 0.0
    for point in result.samples:
        if conn.chart.divisor and np.min(conn.chart.divisor_moduli(point.z)) < config['pole_free_margin']:
            continue
        y = point.vector()
        F = dfield.vector(y)
        dz = F[:n]
        ddz = dfield.jacobian_evaluator(y) @ F
        values = dfield.monomial_evaluator(point.z)
        h, dh = values[0], np.dot(values[1:], dz)
        if abs(h) < config['pole_free_margin']:
            continue
        G = conn.numeric_gamma(point.z)
        quad = np.einsum('kij,i,j->k', G, dz, dz)
        residual = ddz - (dh / h) * dz + quad
        scale = max(1.0, np.linalg.norm(ddz), np.linalg.norm(quad))
        worst = max(worst, float(np.linalg.norm(residual) / scale))
    return worst


# The spiral dichotomy

def classify_A01(conn, component):
    """Surface case: Gamma^1_22 vanishes on the component and Gamma^2_22 has no pole there"""
    if conn.n != 2:
        raise UnsupportedComponent('classify_A01 is defined for surfaces (n = 2)')
    st, moved = straightened_connection(conn, component)
    w1 = st.chart.divisor[0]
    c2 = moved.gamma[0][1][1]
    d2 = moved.gamma[1][1][1]
    verdict = (order_along(c2, w1) >= 1 and order_along(d2, w1) >= 0
               and all(order_along(d2, other) >= 0 for other in st.chart.divisor[1:]))
    logger.info('classify_A01 along %s: %s', component.label, verdict)
    return verdict


@dataclass
class SpiralWitness:
    component: str
    base: np.ndarray
    direction: tuple
    crossing: Crossing


def _direction_samples(n, rng, count):
    basis = [tuple(1 if k == j else 0 for k in range(n)) for j in range(n)]
    extra = []
    while len(basis) + len(extra) < count:
        vector = tuple(int(x) for x in rng.integers(-3, 4, size=n))
        if any(vector) and vector not in basis and vector not in extra:
            extra.append(vector)
    return basis + extra


def component_base_points(chart, component, rng, count, config=None):
    """Numeric points on the component, away from the other components"""
    config = settings(config)
    st = straighten(chart, component)
    points = []
    attempts = 0
    while len(points) < count and attempts < 50 * count:
        attempts += 1
        rest = [to_complex(random_rational(rng)) for _ in range(chart.nvars - 1)]
        point = np.array(st.point_on_component(rest))
        others = [q for q in chart.divisor if q.label != component.label]
        if others:
            values = NumericEvaluator(chart, [chart.field.new(q.poly) for q in others], floor=0.0)(point)
            if np.min(np.abs(values)) < config['pole_free_margin']:
                continue
        points.append(point)
    return points


def spiral_search(conn, frame, component, config=None, rng=None):
    """First transversal crossing witness over base points x directions, or None"""
    config = settings(config)
    require_branched(conn, frame)
    rng = rng if rng is not None else np.random.default_rng(config['seed'])
    n = conn.n
    budget = int(config['spiral_budget'])
    directions = _direction_samples(n, rng, min(budget, n + 4))
    bases = component_base_points(conn.chart, component, rng, max(1, math.ceil(budget / len(directions))), config)
    fields = {}
    h = config['distinguished_half_span']
    for base, A in list(product(bases, directions))[:budget]:
        if A not in fields:
            fields[A] = distinguished_field(conn, frame, A)
        start = FrameBundlePoint.identity(base)
        forward = integrate_distinguished_curve(conn, frame, A, start, (0.0, h), config, fields[A])
        crossing = forward.crossings.get(component.label)
        if crossing is None or not crossing.transversal:
            continue
        backward = integrate_distinguished_curve(conn, frame, A, start, (0.0, -h), config, fields[A])
        back = backward.crossings.get(component.label)
        if back is None or not back.transversal:
            continue
        logger.info('spiral witness along %s: A = %s', component.label, A)
        return SpiralWitness(component.label, base, A, crossing)
    logger.info('no spiral witness along %s within %d samples', component.label, budget)
    return None


def strong_spiral_test(conn, frame, component, A):
    """L_Z(q) restricted to {q = 0} is not identically zero (section g = Id)"""
    dfield = distinguished_field(conn, frame, A)
    chart = conn.chart
    n = conn.n
    section = [chart.one if a == b else chart.zero for a in range(n) for b in range(n)]
    zdot = dfield.restricted(section)
    qf = chart.field.new(component.poly)
    derivative = sum((partial(qf, k) * zdot[k] for k in range(n)), chart.zero)
    return bool(derivative) and order_along(derivative, component) == 0


@dataclass
class SpiralVerdict:
    in_A01: dict
    spiral_witnesses: list
    strong_spiral: dict

    def to_dict(self):
        return {
            'in_A01': self.in_A01,
            'spiral_witnesses': [
                {
                    'component': w.component,
                    'base': w.base,
                    'direction': list(w.direction),
                    'crossing_parameter': w.crossing.parameter,
                    'crossing_slope': w.crossing.slope,
                }
                for w in self.spiral_witnesses
            ],
            'strong_spiral': self.strong_spiral,
        }


def spiral_verdict(conn, frame, config=None):
    """Dichotomy data for every divisor component, one job per component"""
    config = settings(config)
    require_branched(conn, frame)
    components = list(conn.chart.divisor)

    def job(index_component):
        index, component = index_component
        rng = np.random.default_rng(config['seed'] + index)
        try:
            in_a01 = classify_A01(conn, component) if conn.n == 2 else None
        except UnsupportedComponent as e:
            logger.info('classify_A01 skipped for %s: %s', component.label, e)
            in_a01 = None
        witness = spiral_search(conn, frame, component, config, rng)
        if witness is not None:
            strong = strong_spiral_test(conn, frame, component, witness.direction)
        else:
            strong = any(strong_spiral_test(conn, frame, component, e)
                         for e in _direction_samples(conn.n, rng, conn.n))
        return component.label, in_a01, witness, strong

    with ThreadPoolExecutor(max_workers=int(config['workers'])) as pool:
        results = list(pool.map(job, enumerate(components)))
    return SpiralVerdict(
        {label: in_a01 for label, in_a01, _, _ in results},
        [w for _, _, w, _ in results if w is not None],
        {label: strong for label, _, _, strong in results},
    )


def divisor_geodesic(conn, component, base, t_end=1.0, speed=1.0, config=None):
    """Geodesic running inside the component (surface case, requires classify_A01)"""
    config = settings(config)
    if not classify_A01(conn, component):
        raise ValidationError(f'{component.label} is not totally geodesic (classify_A01 is false)')
    st, moved = straightened_connection(conn, component)
    chart = st.chart
    images = [chart.zero, chart.gens[1]]
    d2 = moved.gamma[1][1][1]
    d2 = substitute(d2, images, chart.field) if d2 else chart.zero
    d2_eval = NumericEvaluator(chart, [d2])
    w = st.to_new(base)
    if abs(w[0]) > config['crossing_tol']:
        raise ValidationError('Base point does not lie on the component')
    direction = complex(t_end)

    def rhs(s, y):
        value = d2_eval([0.0, y[0]])[0]
        return np.array([direction * y[1], -direction * value * y[1] ** 2])

    sol = solve_ivp(rhs, (0.0, 1.0), np.array([w[1], speed], dtype=complex), method='RK45',
                    rtol=config['geodesic_rtol'], atol=config['geodesic_atol'])
    if sol.status < 0:
        raise StepUnderflow(f'divisor geodesic: {sol.message}')
    jacobian = NumericEvaluator(chart, [partial(st.old_of_new[i], a) for i in range(2) for a in range(2)],
                                shape=(2, 2), floor=0.0)
    positions = np.array([st.to_old([0.0, y[0]]) for y in sol.y.T])
    velocities = np.array([direction * (jacobian([0.0, y[0]]) @ np.array([0.0, y[1]])) for y in sol.y.T])
    states = np.concatenate([positions, velocities], axis=1)
    return Trajectory(direction * sol.t, states, conn.n, sol.nfev)
