"""Killing fields of a chart connection: exact oracle, prolonged system, local Killing algebra.

Jets are vectors of length n + n^2 ordered (X^1, ..., X^n, A^k_l) with A^k_l
at index n + k*n + l and A^k_l = d_l X^k.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement, product

import numpy as np
from scipy.linalg import subspace_angles, svdvals
from sympy.polys.domains import QQ_I
from sympy.polys.matrices import DomainMatrix

from src.config import settings
from src.models.connection import LinearSystem, curvature, entries, matrix, partial_matrix
from src.models.errors import StabilizationFailure, ValidationError
from src.models.rational import NumericEvaluator, partial, random_point, to_complex
from src.models.transport import CircleSegment, LineSegment, Path, transport

logger = logging.getLogger(__name__)


def jet_index(n, k, l):
    return n + k * n + l


@dataclass
class KillingJet:
    X: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=complex)
        self.A = np.asarray(self.A, dtype=complex).reshape(self.X.size, self.X.size)

    @property
    def n(self):
        return self.X.size

    def vector(self):
        return np.concatenate([self.X, self.A.reshape(-1)])

    @classmethod
    def from_vector(cls, vector, n):
        vector = np.asarray(vector, dtype=complex)
        if vector.size != n + n * n:
            raise ValidationError(f'Jet vectors have length {n + n * n}')
        return cls(vector[:n], vector[n:].reshape(n, n))

    @classmethod
    def of_field(cls, chart, X, point):
        """Numeric jet (X, dX) of a rational vector field at a point"""
        n = chart.nvars
        X = [chart.lift(f) for f in X]
        fns = X + [partial(X[k], l) for k in range(n) for l in range(n)]
        values = NumericEvaluator(chart, fns)(point)
        return cls(values[:n], values[n:])


# Exact Killing equation

@dataclass
class KillingOracleResult:
    residual: dict
    is_killing: bool


def killing_residual(conn, X):
    """(L_X Gamma)^k_ij for a rational vector field X"""
    chart, n = conn.chart, conn.n
    X = [chart.lift(f) for f in X]
    if len(X) != n:
        raise ValidationError(f'Vector field needs {n} components')
    g = conn.gamma
    dX = [[partial(X[k], l) for l in range(n)] for k in range(n)]
    residual = {}
    for k, i, j in product(range(n), repeat=3):
        value = partial(dX[k][j], i)
        for m in range(n):
            if X[m] and g[k][i][j]:
                value += X[m] * partial(g[k][i][j], m)
            if g[m][i][j]:
                value -= g[m][i][j] * dX[k][m]
            if g[k][m][j]:
                value += g[k][m][j] * dX[m][i]
            if g[k][i][m]:
                value += g[k][i][m] * dX[m][j]
        residual[(k, i, j)] = value
    return residual


def killing_oracle(conn, X):
    residual = killing_residual(conn, X)
    return KillingOracleResult(residual, all(not r for r in residual.values()))


@dataclass
class AnsatzResult:
    dimension: int
    fields: list
    unknowns: int
    degree: int
    pole_order: int


def _monomials(nvars, degree):
    found = []
    for total in range(degree + 1):
        for combo in combinations_with_replacement(range(nvars), total):
            exps = [0] * nvars
            for var in combo:
                exps[var] += 1
            found.append(tuple(exps))
    return found


def killing_ansatz(conn, degree=2, pole_order=2):
    """Exact Killing fields X^k = P^k / prod q^pole_order with bounded numerator degree"""
    chart, n = conn.chart, conn.n
    denominator = chart.one
    for q in chart.divisor:
        denominator *= chart.field.new(q.poly) ** pole_order
    monomials = _monomials(n, degree + max(sum(m) for m in denominator.numer.itermonoms()))
    basis = []
    for k in range(n):
        for exps in monomials:
            term = chart.one
            for var, e in enumerate(exps):
                term *= chart.gens[var] ** e
            X = [chart.zero] * n
            X[k] = term / denominator
            basis.append(X)
    residuals = [killing_residual(conn, X) for X in basis]
    rows = {}
    row_keys = {}
    for key in product(range(n), repeat=3):
        common = None
        for r in residuals:
            if r[key]:
                common = r[key].denom if common is None else common.lcm(r[key].denom)
        if common is None:
            continue
        for col, r in enumerate(residuals):
            value = r[key]
            if not value:
                continue
            scaled = value.numer * common.exquo(value.denom)
            for monom, coeff in scaled.terms():
                row = row_keys.setdefault((key, monom), len(row_keys))
                rows.setdefault(row, {})[col] = QQ_I.convert(coeff)
    system = DomainMatrix(rows, (max(len(row_keys), 1), len(basis)), QQ_I)
    kernel = system.nullspace()
    fields = []
    for vector in kernel.to_list():
        X = [chart.zero] * n
        for col, coeff in enumerate(vector):
            if coeff:
                k = col // len(monomials)
                X[k] += basis[col][k] * chart.field.ground_new(coeff)
        fields.append(X)
    logger.info('Killing ansatz (degree %d, pole order %d): %d unknowns, dimension %d',
                degree, pole_order, len(basis), len(fields))
    return AnsatzResult(len(fields), fields, len(basis), degree, pole_order)


# Prolonged system

@dataclass(frozen=True)
class ProlongedSystem:
    conn: object
    base: LinearSystem

    @property
    def rank(self):
        return self.base.rank

    @property
    def chart(self):
        return self.base.chart

    @cached_property
    def curvature(self):
        return curvature(self.base)


def build_prolonged_system(conn):
    """Horizontal sections (X, A) of d + sum dz_i P_i are the Killing jets"""
    chart, n = conn.chart, conn.n
    size = n + n * n
    g = conn.gamma
    dg = [[[[partial(g[k][i][j], m) for m in range(n)] for j in range(n)] for i in range(n)] for k in range(n)]
    mats = []
    for i in range(n):
        P = [[chart.zero for _ in range(size)] for _ in range(size)]
        for k in range(n):
            P[k][jet_index(n, k, i)] -= chart.one
        for k, j in product(range(n), repeat=2):
            row = jet_index(n, k, j)
            for m in range(n):
                P[row][m] += dg[k][i][j][m]
                P[row][jet_index(n, k, m)] -= g[m][i][j]
                P[row][jet_index(n, m, i)] += g[k][m][j]
                P[row][jet_index(n, m, j)] += g[k][i][m]
        mats.append(matrix(chart, P))
    return ProlongedSystem(conn, LinearSystem(chart, size, tuple(mats)))


def is_horizontal(prolonged, X):
    """Exact check that the jet (X, dX) of a rational field is horizontal"""
    chart = prolonged.chart
    n = chart.nvars
    X = [chart.lift(f) for f in X]
    jet = X + [partial(X[k], l) for k in range(n) for l in range(n)]
    column = matrix(chart, [[e] for e in jet])
    for i, P in enumerate(prolonged.base.matrices):
        derivative = matrix(chart, [[partial(e, i)] for e in jet])
        if any(e for row in entries(derivative + P * column) for e in row):
            return False
    return True


@dataclass
class KillingSubspace:
    basepoint: np.ndarray
    basis: np.ndarray
    obstruction_ranks: list = field(default_factory=list)
    generic_dimension: int = None
    diagnostic: str = ''

    @property
    def dimension(self):
        return self.basis.shape[1]

    @property
    def jets(self):
        n = len(self.basepoint)
        return [KillingJet.from_vector(self.basis[:, c], n) for c in range(self.dimension)]

    def contains(self, vector, tol=1e-6):
        vector = np.asarray(vector, dtype=complex)
        residual = vector - self.basis @ (self.basis.conj().T @ vector)
        return np.linalg.norm(residual) <= tol * max(1.0, np.linalg.norm(vector))


def covariant_derivative(M, P, var):
    """d_var M + [P_var, M] for an endomorphism-valued function"""
    return partial_matrix(M, var) + P * M - M * P


def _kernel(stack, tol):
    """Orthonormal basis of the null space, singular values below tol * max(1, s_max) count as zero"""
    size = stack.shape[1]
    if not stack.size:
        return np.eye(size, dtype=complex)
    _, singular, vh = np.linalg.svd(stack)
    threshold = tol * max(1.0, singular[0]) if singular.size else tol
    rank = int(np.sum(singular > threshold))
    return vh[rank:].conj().T


def _subspace_dimension(prolonged, point, config):
    chart = prolonged.chart
    size = prolonged.rank
    tol = config['rank_tol']
    P = prolonged.base.matrices
    layer = [prolonged.curvature.matrix(i, j) for i in range(chart.nvars) for j in range(i + 1, chart.nvars)]
    ranks = []
    previous = size
    repeats = 0
    stack = np.zeros((0, size), dtype=complex)
    for order in range(size + 2):
        if layer:
            fns = [e for M in layer for row in entries(M) for e in row]
            values = NumericEvaluator(chart, fns, shape=(len(layer) * size, size), floor=config['eval_floor'])(point)
            stack = np.vstack([stack, values])
        basis = _kernel(stack, tol)
        dimension = basis.shape[1]
        ranks.append(size - dimension)
        logger.debug('obstruction order %d: rank %d', order, size - dimension)
        repeats = repeats + 1 if order > 0 and dimension == previous else 0
        if repeats == 2:
            return basis, ranks
        if dimension == 0:
            return basis, ranks
        previous = dimension
        layer = [covariant_derivative(M, P[var], var) for M in layer for var in range(chart.nvars)]
        if not layer:
            return basis, ranks
    raise StabilizationFailure(f'Obstruction ranks {ranks} did not stabilize within {len(ranks)} orders')


def killing_subspace_at(prolonged, basepoint, config=None, rng=None):
    """Jets at `basepoint` annihilated by the curvature and its covariant derivatives"""
    config = settings(config)
    basepoint = np.asarray([complex(x) for x in basepoint])
    basis, ranks = _subspace_dimension(prolonged, basepoint, config)
    rng = rng if rng is not None else np.random.default_rng(config['seed'])
    other = [to_complex(c) for c in random_point(prolonged.chart, rng, clearance=config['pole_free_margin'])]
    generic, _ = _subspace_dimension(prolonged, np.asarray(other), config)
    diagnostic = ''
    if generic.shape[1] != basis.shape[1]:
        diagnostic = (f'dimension {basis.shape[1]} at the basepoint differs from '
                      f'{generic.shape[1]} at the random point {np.round(other, 6).tolist()}')
        logger.warning('Killing subspace: %s', diagnostic)
    logger.info('Killing subspace at %s: dimension %d, obstruction ranks %s', basepoint, basis.shape[1], ranks)
    return KillingSubspace(basepoint, basis, ranks, generic.shape[1], diagnostic)


def spans_tangent_space(subspace, config=None):
    """The X-blocks of the Killing jets span C^n"""
    config = settings(config)
    n = len(subspace.basepoint)
    if subspace.dimension == 0:
        return False
    block = subspace.basis[:n, :]
    singular = svdvals(block)
    return int(np.sum(singular > config['rank_tol'] * max(1.0, singular[0]))) == n


def transport_killing_jet(prolonged, path, jet, config=None):
    config = settings(config)
    vector = jet.vector() if isinstance(jet, KillingJet) else np.asarray(jet, dtype=complex)
    result = transport(prolonged.base, path, vector.reshape(-1, 1), config)
    return KillingJet.from_vector(result.matrix[:, 0], prolonged.chart.nvars)


def transport_subspace(prolonged, path, subspace, config=None):
    """Transported Killing basis and its principal angles against the endpoint subspace"""
    config = settings(config)
    moved = transport(prolonged.base, path, subspace.basis, config).matrix
    target = killing_subspace_at(prolonged, path.end, config)
    angles = subspace_angles(moved, target.basis) if moved.shape[1] == target.dimension else None
    return moved, target, angles


def evaluate_killing_field(prolonged, jet, path, per_segment=8, config=None):
    """X-block of the transported jet at points along the path"""
    config = settings(config)
    n = prolonged.chart.nvars
    vector = (jet.vector() if isinstance(jet, KillingJet) else np.asarray(jet, dtype=complex)).reshape(-1, 1)
    samples = [(path.start, vector[:n, 0].copy())]
    for segment in path.segments:
        cuts = np.linspace(0.0, 1.0, per_segment + 1)
        for a, b in zip(cuts, cuts[1:]):
            piece = _piece(segment, a, b)
            vector = transport(prolonged.base, piece, vector, config).matrix
            samples.append((segment.point(b), vector[:n, 0].copy()))
    return samples


def _piece(segment, a, b):
    if isinstance(segment, LineSegment):
        return Path.polyline([segment.point(a), segment.point(b)])
    turns = segment.turns * (b - a)
    start_angle = segment.angle + 2 * np.pi * segment.turns * a
    return Path((CircleSegment(segment.center, segment.direction, segment.radius, start_angle, turns),))
