"""Meromorphic affine connections and linear systems on a chart.

Conventions: a rank-r system is the one-form sum_i dz_i (x) A_i and acts on
component vectors as d + A. For an affine connection, (A_i)_{kj} = Gamma^k_{ij},
i.e. nabla_{d_i} d_j = sum_k Gamma^k_{ij} d_k.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
from sympy.polys.matrices import DomainMatrix

from src.models.errors import NotBranched, PoleOnComponent, UnsupportedComponent, ValidationError
from src.models.rational import (
    Chart,
    NumericEvaluator,
    evaluate,
    format_rational,
    is_holomorphic,
    order_along,
    partial,
    poles_only_on,
    substitute,
    substitute_poly,
)

logger = logging.getLogger(__name__)


# Exact matrices over the chart's fraction field

def matrix(chart, rows):
    rows = [[chart.lift(entry) for entry in row] for row in rows]
    shape = (len(rows), len(rows[0]) if rows else 0)
    return DomainMatrix(rows, shape, chart.domain)


def zeros(chart, nrows, ncols=None):
    return DomainMatrix.zeros((nrows, nrows if ncols is None else ncols), chart.domain)


def identity(chart, size):
    return DomainMatrix.eye(size, chart.domain)


def entries(M):
    """Rows of a DomainMatrix as nested lists of rational functions"""
    return M.to_list()


def map_entries(M, func):
    rows = [[func(entry) for entry in row] for row in entries(M)]
    return DomainMatrix(rows, M.shape, M.domain)


def partial_matrix(M, var):
    return map_entries(M, lambda entry: partial(entry, var))


def is_zero_matrix(M):
    return all(not entry for row in entries(M) for entry in row)


def matrices_equal(M, N):
    return M.shape == N.shape and is_zero_matrix(M - N)


def _poles_report(chart, M, label):
    errors = []
    for r, row in enumerate(entries(M)):
        for c, entry in enumerate(row):
            if entry and not poles_only_on(entry, chart.divisor):
                errors.append(f'{label}[{r + 1},{c + 1}] = {format_rational(entry)} has poles off the divisor')
    return errors


@dataclass(frozen=True)
class LinearSystem:
    """Meromorphic connection d + sum_i dz_i (x) A_i on a trivial rank-r bundle"""
    chart: Chart
    rank: int
    matrices: tuple
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'matrices', tuple(self.matrices))
        errors = []
        if len(self.matrices) != self.chart.nvars:
            errors.append(f'Expected {self.chart.nvars} connection matrices, got {len(self.matrices)}')
        for i, A in enumerate(self.matrices):
            if A.shape != (self.rank, self.rank):
                errors.append(f'A_{i + 1} has shape {A.shape}, expected {(self.rank, self.rank)}')
            elif self.validate:
                errors.extend(_poles_report(self.chart, A, f'A_{i + 1}'))
        if errors:
            raise ValidationError(errors)

    @classmethod
    def zero(cls, chart, rank):
        return cls(chart, rank, tuple(zeros(chart, rank) for _ in range(chart.nvars)))

    @cached_property
    def evaluator(self):
        fns = [entry for A in self.matrices for row in entries(A) for entry in row]
        return NumericEvaluator(self.chart, fns, shape=(self.chart.nvars, self.rank, self.rank))

    def numeric(self, point):
        """Complex matrices A_i(point), shape (n, r, r)"""
        return self.evaluator(point)

    def contracted(self, point, velocity):
        """sum_i A_i(point) * velocity_i"""
        return np.tensordot(np.asarray(velocity, dtype=complex), self.numeric(point), axes=1)


def validate_connection(chart, gamma, pole_bound=None):
    """Check shape and pole location of Christoffel symbols"""
    errors = []
    n = chart.nvars
    if len(gamma) != n or any(len(row) != n or any(len(col) != n for col in row) for row in gamma):
        return [f'Christoffel symbols must be indexed (k, i, j) with k, i, j < {n}']
    for k, i, j in product(range(n), repeat=3):
        entry = gamma[k][i][j]
        if not entry:
            continue
        if not poles_only_on(entry, chart.divisor):
            errors.append(f'Gamma^{k + 1}_{i + 1}{j + 1} = {format_rational(entry)} has poles off the divisor')
        if pole_bound is not None:
            for q in chart.divisor:
                if order_along(entry, q) < -pole_bound:
                    errors.append(f'Gamma^{k + 1}_{i + 1}{j + 1} exceeds pole bound {pole_bound} along {q}')
    return errors


@dataclass(frozen=True)
class ChartConnection:
    """Affine connection given by Christoffel symbols gamma[k][i][j]"""
    chart: Chart
    gamma: tuple
    pole_bound: int = None

    def __post_init__(self):
        gamma = tuple(tuple(tuple(self.chart.lift(g) for g in col) for col in row) for row in self.gamma)
        object.__setattr__(self, 'gamma', gamma)
        errors = validate_connection(self.chart, gamma, self.pole_bound)
        if errors:
            raise ValidationError(errors)

    @classmethod
    def from_entries(cls, chart, entries_map, pole_bound=None):
        """Build from a sparse {(k, i, j): f} map with 0-based indices"""
        n = chart.nvars
        gamma = [[[chart.zero for _ in range(n)] for _ in range(n)] for _ in range(n)]
        for (k, i, j), value in entries_map.items():
            gamma[k][i][j] = chart.lift(value)
        return cls(chart, gamma, pole_bound)

    @classmethod
    def flat(cls, chart):
        return cls.from_entries(chart, {})

    @classmethod
    def from_system(cls, system, pole_bound=None):
        n = system.chart.nvars
        if system.rank != n:
            raise ValidationError('An affine connection needs a rank-n system')
        rows = [entries(A) for A in system.matrices]
        gamma = [[[rows[i][k][j] for j in range(n)] for i in range(n)] for k in range(n)]
        return cls(system.chart, gamma, pole_bound)

    @property
    def n(self):
        return self.chart.nvars

    def nonzero_entries(self):
        n = self.n
        return {(k, i, j): self.gamma[k][i][j] for k, i, j in product(range(n), repeat=3) if self.gamma[k][i][j]}

    @cached_property
    def system(self):
        n = self.n
        mats = [matrix(self.chart, [[self.gamma[k][i][j] for j in range(n)] for k in range(n)]) for i in range(n)]
        return LinearSystem(self.chart, n, tuple(mats), validate=False)

    @cached_property
    def evaluator(self):
        n = self.n
        fns = [self.gamma[k][i][j] for k, i, j in product(range(n), repeat=3)]
        return NumericEvaluator(self.chart, fns, shape=(n, n, n))

    def numeric_gamma(self, point):
        return self.evaluator(point)


@dataclass(frozen=True)
class GaugeMatrix:
    entries: DomainMatrix
    inverse: DomainMatrix

    def __post_init__(self):
        size = self.entries.shape[0]
        if self.entries.shape != (size, size) or self.inverse.shape != (size, size):
            raise ValidationError('Gauge matrices must be square and of equal size')
        if not matrices_equal(self.entries * self.inverse, DomainMatrix.eye(size, self.entries.domain)):
            raise ValidationError('Q * Q^-1 is not the identity')

    @classmethod
    def identity(cls, chart, size):
        return cls(identity(chart, size), identity(chart, size))

    @property
    def size(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class SubmoduleFrame:
    """Columns of Q are a basis of a submodule E with TM inside E inside TM(*D)"""
    chart: Chart
    gauge: GaugeMatrix

    def __post_init__(self):
        errors = validate_frame(self.chart, self.gauge)
        if errors:
            raise ValidationError(errors)

    @classmethod
    def trivial(cls, chart):
        return cls(chart, GaugeMatrix.identity(chart, chart.nvars))

    @property
    def Q(self):
        return self.gauge.entries

    @property
    def Qinv(self):
        return self.gauge.inverse

    @cached_property
    def evaluator(self):
        n = self.chart.nvars
        fns = [e for row in entries(self.Q) for e in row] + [e for row in entries(self.Qinv) for e in row]
        return NumericEvaluator(self.chart, fns, shape=(2, n, n))

    def numeric(self, point):
        """(Q(point), Q^-1(point))"""
        values = self.evaluator(point)
        return values[0], values[1]


def validate_frame(chart, gauge):
    errors = []
    if gauge.size != chart.nvars:
        errors.append(f'Frame must be {chart.nvars}x{chart.nvars}')
        return errors
    errors.extend(_poles_report(chart, gauge.entries, 'Q'))
    for r, row in enumerate(entries(gauge.inverse)):
        for c, entry in enumerate(row):
            if not is_holomorphic(entry):
                errors.append(f'Qinv[{r + 1},{c + 1}] = {format_rational(entry)} is not holomorphic (TM must lie in E)')
    return errors


# Operations

def gauge_transform(system, Q):
    """A'_i = Q^-1 d_i Q + Q^-1 A_i Q"""
    Qm, Qinv = Q.entries, Q.inverse
    mats = []
    for i, A in enumerate(system.matrices):
        mats.append(Qinv * partial_matrix(Qm, i) + Qinv * A * Qm)
    return LinearSystem(system.chart, system.rank, tuple(mats), validate=False)


@dataclass(frozen=True)
class TorsionTensor:
    chart: Chart
    components: tuple  # [k][i][j]

    def __call__(self, k, i, j):
        return self.components[k][i][j]

    @property
    def is_zero(self):
        return not self.nonzero_entries()

    def nonzero_entries(self):
        n = self.chart.nvars
        return {(k, i, j): self.components[k][i][j]
                for k, i, j in product(range(n), repeat=3) if self.components[k][i][j]}

    def numeric(self, point):
        n = self.chart.nvars
        fns = [self.components[k][i][j] for k, i, j in product(range(n), repeat=3)]
        return NumericEvaluator(self.chart, fns, shape=(n, n, n))(point)


def torsion(conn):
    """T^k_ij = Gamma^k_ij - Gamma^k_ji (coordinate fields commute)"""
    n = conn.n
    g = conn.gamma
    comps = tuple(tuple(tuple(g[k][i][j] - g[k][j][i] for j in range(n)) for i in range(n)) for k in range(n))
    return TorsionTensor(conn.chart, comps)


@dataclass(frozen=True)
class CurvatureTensor:
    """R_ij = d_i A_j - d_j A_i + [A_i, A_j], stored for i < j"""
    chart: Chart
    rank: int
    blocks: dict

    def matrix(self, i, j):
        if i == j:
            return zeros(self.chart, self.rank)
        if i < j:
            return self.blocks[(i, j)]
        return -self.blocks[(j, i)]

    def __call__(self, k, l, i, j):
        return entries(self.matrix(i, j))[k][l]

    @property
    def is_zero(self):
        return all(is_zero_matrix(block) for block in self.blocks.values())

    def nonzero_entries(self):
        found = {}
        for (i, j), block in sorted(self.blocks.items()):
            for k, row in enumerate(entries(block)):
                for l, entry in enumerate(row):
                    if entry:
                        found[(k, l, i, j)] = entry
        return found

    def numeric(self, point):
        """Array R[k, l, i, j]"""
        n, r = self.chart.nvars, self.rank
        fns = [entries(self.matrix(i, j))[k][l] for k, l, i, j in product(range(r), range(r), range(n), range(n))]
        return NumericEvaluator(self.chart, fns, shape=(r, r, n, n))(point)


def curvature(system):
    n = system.chart.nvars
    A = system.matrices
    blocks = {}
    for i in range(n):
        for j in range(i + 1, n):
            blocks[(i, j)] = (partial_matrix(A[j], i) - partial_matrix(A[i], j)
                              + A[i] * A[j] - A[j] * A[i])
    return CurvatureTensor(system.chart, system.rank, blocks)


def conjugate(M, Q):
    """Q^-1 M Q"""
    return Q.inverse * M * Q.entries


@dataclass(frozen=True)
class NullMorphism:
    """Pullback along a curve inside the polar locus: the pulled-back sheaf collapses"""
    reason: str
    components: tuple = ()


def pullback_along_curve(system, curve, curve_chart):
    """Pull the system back along a polynomial curve t -> (gamma_1(t), ..., gamma_n(t))"""
    if curve_chart.nvars != 1:
        raise ValidationError('Curves are parametrized by a single variable')
    if len(curve) != system.chart.nvars:
        raise ValidationError(f'Curve needs {system.chart.nvars} components')
    curve = [curve_chart.lift(c) for c in curve]
    if any(not is_holomorphic(c) for c in curve):
        raise ValidationError('Curve components must be polynomials')
    target = curve_chart.field
    velocity = [partial(c, 0) for c in curve]
    r = system.rank
    total = [[target.zero for _ in range(r)] for _ in range(r)]
    collapsing, regular = [], 0
    for i, A in enumerate(system.matrices):
        if not velocity[i]:
            continue
        for row, values in enumerate(entries(A)):
            for col, entry in enumerate(values):
                if not entry:
                    continue
                if not substitute_poly(entry.denom, curve, target):
                    collapsing.append((i, row, col))
                    continue
                regular += 1
                total[row][col] += substitute(entry, curve, target) * velocity[i]
    inside = tuple(q.label for q in system.chart.divisor if not substitute_poly(q.poly, curve, target))
    if collapsing and regular:
        labels = ', '.join(f'A_{i + 1}[{row + 1},{col + 1}]' for i, row, col in collapsing)
        raise PoleOnComponent(f'Curve lies in the polar locus of {labels} but not of the other entries')
    if collapsing:
        logger.debug('pullback collapses: %d polar entries vanish along the curve', len(collapsing))
        return NullMorphism(f'curve lies in the polar locus of {len(collapsing)} connection entries', inside)
    components = []
    for q in system.chart.divisor:
        image = substitute_poly(q.poly, curve, target)
        if not image.numer.is_ground:
            components.append(curve_chart.component(image, q.multiplicity, q.label))
    pulled_chart = curve_chart.with_divisor(components)
    return LinearSystem(pulled_chart, r, (matrix(pulled_chart, total),), validate=False)


@dataclass(frozen=True)
class BranchedCheck:
    branched: bool
    frame_system: LinearSystem
    offending: tuple = ()

    def __bool__(self):
        return self.branched


def is_branched(conn, frame):
    """The connection matrices in the frame basis are holomorphic"""
    gauged = gauge_transform(conn.system, frame.gauge)
    offending = []
    for i, A in enumerate(gauged.matrices):
        for r, row in enumerate(entries(A)):
            for c, entry in enumerate(row):
                if not is_holomorphic(entry):
                    offending.append(f'A\'_{i + 1}[{r + 1},{c + 1}] = {format_rational(entry)}')
    return BranchedCheck(not offending, gauged, tuple(offending))


def require_branched(conn, frame):
    check = is_branched(conn, frame)
    if not check:
        raise NotBranched('Connection is not branched for this frame: ' + ', '.join(check.offending[:4]))
    return check


def frame_parallel_connection(frame):
    """The connection making the columns of Q parallel: A_i = -(d_i Q) Q^-1"""
    chart = frame.chart
    mats = [-(partial_matrix(frame.Q, i) * frame.Qinv) for i in range(chart.nvars)]
    return ChartConnection.from_system(LinearSystem(chart, chart.nvars, tuple(mats)))


def cartan_structure_functions(conn, frame, point, floor=None):
    """Cartan curvature at (point, g = Id) against the graded basis of g.

    Returns kappa[b, c, :] = (torsion part in R^n, curvature part in gl_n
    row-major), both in the frame basis.
    """
    n = conn.n
    T = torsion(conn).numeric(point)
    R = curvature(conn.system).numeric(point)
    Q, Qinv = frame.numeric(point)
    t_frame = np.einsum('ak,kij,ib,jc->abc', Qinv, T, Q, Q)
    r_frame = np.einsum('ak,klij,ld,ib,jc->adbc', Qinv, R, Q, Q, Q)
    kappa = np.zeros((n, n, n + n * n), dtype=complex)
    for b in range(n):
        for c in range(n):
            kappa[b, c, :n] = t_frame[:, b, c]
            kappa[b, c, n:] = r_frame[:, :, b, c].reshape(n * n)
    return kappa


# The affine Lie algebra g = C^n x| gl_n, basis (e_1..e_n, E_11, E_12, ..., E_nn)

def affine_bracket(x, y, n):
    """[(v, M), (w, N)] = (M w - N v, M N - N M) on coefficient lists"""
    v, M = x[:n], [x[n + k * n:n + (k + 1) * n] for k in range(n)]
    w, N = y[:n], [y[n + k * n:n + (k + 1) * n] for k in range(n)]
    trans = [sum((M[a][b] * w[b] - N[a][b] * v[b] for b in range(n)), x[0] * 0) for a in range(n)]
    lin = []
    for a in range(n):
        for b in range(n):
            lin.append(sum((M[a][c] * N[c][b] - N[a][c] * M[c][b] for c in range(n)), x[0] * 0))
    return trans + lin


def affine_ad(x, n, chart):
    """Matrix of ad(x) on g"""
    dim = n + n * n
    columns = []
    for c in range(dim):
        basis = [chart.zero] * dim
        basis[c] = chart.one
        columns.append(affine_bracket(x, basis, n))
    return matrix(chart, [[columns[c][r] for c in range(dim)] for r in range(dim)])


def tractor_curvature_trace(conn, frame):
    """C_1 of the tractor curvature ad(d omega_0) + ad(omega_0 ^ omega_0) at g = Id"""
    check = require_branched(conn, frame)
    chart, n = conn.chart, conn.n
    qinv = entries(frame.Qinv)
    omega = []
    for i in range(n):
        theta = [qinv[a][i] for a in range(n)]
        connection_part = [e for row in entries(check.frame_system.matrices[i]) for e in row]
        omega.append(theta + connection_part)
    trace = [[chart.zero for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d_omega = [partial(b, i) - partial(a, j) for a, b in zip(omega[i], omega[j])]
            bracket = affine_bracket(omega[i], omega[j], n)
            form = [a + b for a, b in zip(d_omega, bracket)]
            value = sum(affine_ad(form, n, chart).diagonal(), chart.zero)
            value = getattr(value, 'element', value)
            trace[i][j] = value
            trace[j][i] = -value
    return trace


# Coordinate changes and straightening

def transform_coordinates(conn, new_chart, old_of_new, new_of_old):
    """Christoffel symbols in new coordinates w, given z(w) and w(z)"""
    n = conn.n
    old_of_new = [new_chart.lift(f) for f in old_of_new]
    target = new_chart.field
    K = [[partial(old_of_new[i], a) for a in range(n)] for i in range(n)]
    H = [[[partial(K[k][a], b) for b in range(n)] for a in range(n)] for k in range(n)]
    J = [[substitute(partial(conn.chart.lift(new_of_old[c]), k), old_of_new, target) for k in range(n)]
         for c in range(n)]
    gamma = [[[substitute(conn.gamma[k][i][j], old_of_new, target) if conn.gamma[k][i][j] else target.zero
               for j in range(n)] for i in range(n)] for k in range(n)]
    inner = [[[sum((K[i][a] * K[j][b] * gamma[k][i][j] for i in range(n) for j in range(n)), target.zero)
               + H[k][a][b] for b in range(n)] for a in range(n)] for k in range(n)]
    new_gamma = [[[sum((J[c][k] * inner[k][a][b] for k in range(n)), target.zero)
                   for b in range(n)] for a in range(n)] for c in range(n)]
    return ChartConnection(new_chart, new_gamma)


def pull_back_system(system, new_chart, old_of_new):
    """The same bundle connection written in new chart coordinates"""
    n = system.chart.nvars
    old_of_new = [new_chart.lift(f) for f in old_of_new]
    target = new_chart.field
    K = [[partial(old_of_new[i], a) for a in range(n)] for i in range(n)]
    moved = [map_entries_to(A, lambda e: substitute(e, old_of_new, target) if e else target.zero, new_chart)
             for A in system.matrices]
    mats = []
    for a in range(n):
        total = zeros(new_chart, system.rank)
        for i in range(n):
            if K[i][a]:
                total = total + _scale(moved[i], K[i][a], new_chart)
        mats.append(total)
    return LinearSystem(new_chart, system.rank, tuple(mats), validate=False)


def map_entries_to(M, func, chart):
    rows = [[func(entry) for entry in row] for row in entries(M)]
    return matrix(chart, rows)


def _scale(M, factor, chart):
    return map_entries_to(M, lambda e: e * factor, chart)


@dataclass(frozen=True)
class Straightening:
    """Coordinates w with the component equal to {w_1 = 0}.

    The component is c*(z_j - p(others)); w_1 = z_j - p, and w_2, ... are the
    remaining z's in order.
    """
    source: Chart
    chart: Chart
    component_label: str
    index: int
    old_of_new: tuple
    new_of_old: tuple
    graph: object  # p as a rational function on the source chart

    def to_new(self, point):
        values = [complex(x) for x in point]
        return [evaluate(f, values) for f in self.new_of_old]

    def to_old(self, point):
        return [evaluate(f, [complex(x) for x in point]) for f in self.old_of_new]

    def point_on_component(self, rest):
        """Old-chart point with w_1 = 0 and the other new coordinates `rest`"""
        return self.to_old([0] + list(rest))


def _fresh_names(count, taken):
    names = []
    for index in range(1, count + 1):
        name = f'w{index}'
        while name in taken:
            name += '_'
        names.append(name)
    return names


def straighten(chart, component):
    """Recognise a graph component c*(z_j - p(z_others)) and straighten it"""
    q = component.poly
    ring = chart.ring
    n = chart.nvars
    for j in range(n):
        if q.degree(j) != 1:
            continue
        slope = q.diff(ring.gens[j])
        if not slope.is_ground:
            continue
        c = slope.LC
        rest = q - slope * ring.gens[j]
        graph = chart.field.new(-rest.quo_ground(c))
        names = _fresh_names(n, chart.var_names)
        others = [k for k in range(n) if k != j]
        new_chart = Chart(names)
        w = new_chart.gens
        # old coordinates as functions of w
        rest_images = [None] * n
        for position, k in enumerate(others):
            rest_images[k] = w[position + 1]
        graph_in_w = substitute(graph, [rest_images[k] if k != j else new_chart.zero for k in range(n)],
                                new_chart.field)
        old_of_new = [None] * n
        for k in others:
            old_of_new[k] = rest_images[k]
        old_of_new[j] = w[0] + graph_in_w
        z = chart.gens
        new_of_old = [z[j] - graph] + [z[k] for k in others]
        components = [new_chart.component(w[0], component.multiplicity, component.label)]
        for other in chart.divisor:
            if other.poly == q:
                continue
            image = substitute_poly(other.poly, old_of_new, new_chart.field)
            if not image.numer.is_ground:
                components.append(new_chart.component(image, other.multiplicity, other.label))
        new_chart = new_chart.with_divisor(components)
        old_of_new = tuple(new_chart.lift(f) for f in old_of_new)
        return Straightening(chart, new_chart, component.label, j, old_of_new, tuple(new_of_old), graph)
    raise UnsupportedComponent(f'Component {component} is not a graph z_j - p(other variables)')


def straightened_connection(conn, component):
    st = straighten(conn.chart, component)
    return st, transform_coordinates(conn, st.chart, st.old_of_new, st.new_of_old)


# Affine space of branched connections directed by End(E)-valued forms

def perturb(conn, theta):
    """Gamma + Theta, theta a list of n matrices (Theta_i)_{kj}"""
    mats = [A + T for A, T in zip(conn.system.matrices, theta)]
    return ChartConnection.from_system(LinearSystem(conn.chart, conn.n, tuple(mats)), conn.pole_bound)


def is_endomorphism_valued(theta, frame):
    """Q^-1 Theta_i Q holomorphic for every i"""
    return all(is_holomorphic(e) for T in theta for row in entries(conjugate(T, frame.gauge)) for e in row)


def endomorphism_form(phi, chart, component):
    """Surface case: phi has the pole form [[*, z1 f1], [*, f2]] along the component"""
    if chart.nvars != 2:
        raise UnsupportedComponent('The endomorphism pole form is a surface statement (n = 2)')
    st = straighten(chart, component)
    target = st.chart.field
    K = [[partial(st.old_of_new[i], a) for a in range(2)] for i in range(2)]
    J = [[substitute(partial(chart.lift(st.new_of_old[c]), k), st.old_of_new, target) for k in range(2)]
         for c in range(2)]
    moved = [[substitute(e, st.old_of_new, target) if e else target.zero for e in row] for row in entries(phi)]
    rows = [[sum((J[c][i] * moved[i][j] * K[j][b] for i in range(2) for j in range(2)), target.zero)
             for b in range(2)] for c in range(2)]
    w1 = st.chart.divisor[0]
    upper = order_along(rows[0][1], w1)
    lower = order_along(rows[1][1], w1)
    diagnostics = {'upper_right_order': upper, 'lower_right_order': lower}
    return upper >= 1 and lower >= 0, diagnostics


def forces_spiral(frame, component):
    """True when some generator Q E_ab Q^-1 of End(E) breaks the pole form.

    A non-spiral branched connection on E forces every section of End(E) into
    the pole form, so a failing generator means every branched connection with
    this submodule is spiral along the component.
    """
    chart = frame.chart
    n = chart.nvars
    failures = []
    for a, b in product(range(n), repeat=2):
        unit = [[chart.one if (r, c) == (a, b) else chart.zero for c in range(n)] for r in range(n)]
        phi = frame.Q * matrix(chart, unit) * frame.Qinv
        ok, diagnostics = endomorphism_form(phi, chart, component)
        if not ok:
            failures.append(((a, b), diagnostics))
    return bool(failures), failures
