"""Local monodromy of meromorphic linear systems around divisor components."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, null_space, subspace_angles, svdvals

from src.config import settings
from src.models.connection import entries, pull_back_system, straighten
from src.models.errors import (
    DegenerateTransversal,
    NearPoleEvaluation,
    NotInvariant,
    QuotientIllDefined,
    StepUnderflow,
    ValidationError,
)
from src.models.rational import (
    NumericEvaluator,
    format_rational,
    order_along,
    random_rational,
    substitute,
    to_complex,
)
from src.models.transport import CircleSegment, LineSegment, Path, path_clearance, transport

logger = logging.getLogger(__name__)


@dataclass
class Loop:
    basepoint: np.ndarray
    path: Path
    component: str = ''
    radius: float = None

    def __post_init__(self):
        self.basepoint = np.asarray(self.basepoint, dtype=complex)
        if not np.allclose(self.path.start, self.basepoint, atol=1e-12) or not self.path.is_closed:
            raise ValidationError('A loop must start and end at its basepoint')

    def then(self, other):
        """This loop followed by `other`"""
        return Loop(self.basepoint, self.path.then(other.path), f'{self.component}*{other.component}')


def _winding(values):
    angles = np.unwrap(np.angle(values))
    return int(round((angles[-1] - angles[0]) / (2 * np.pi)))


def loop_around(chart, component, basepoint, radius=None, config=None):
    """Segment to the circle of `radius` around the component in the transverse line, once around, back"""
    config = settings(config)
    radius = config['loop_radius'] if radius is None else radius
    st = straighten(chart, component)
    base = np.asarray([complex(x) for x in basepoint])
    w = np.asarray(st.to_new(base))
    if abs(w[0]) < config['path_clearance']:
        raise DegenerateTransversal(f'Basepoint lies on {component.label}')
    center = np.asarray(st.to_old([0.0] + list(w[1:])))
    direction = np.zeros(chart.nvars, dtype=complex)
    direction[st.index] = 1.0
    offset = base - center
    angle = float(np.angle(offset[st.index]))
    start = center + radius * np.exp(1j * angle) * direction
    circle = CircleSegment(center, direction, radius, angle)
    path = Path((LineSegment(base, start), circle, LineSegment(start, base)))
    samples = int(config['loop_samples'])
    clearance = path_clearance(chart, path, samples)
    if clearance < config['path_clearance']:
        raise DegenerateTransversal(f'Loop around {component.label} comes within {clearance:.2e} of the divisor')
    grid = np.linspace(0.0, 1.0, samples + 1)
    ring = np.array([circle.point(s) for s in grid])
    for q in chart.divisor:
        values = NumericEvaluator(chart, [chart.field.new(q.poly)], floor=0.0)
        winding = _winding(np.array([values(p)[0] for p in ring]))
        expected = 1 if q.label == component.label else 0
        if winding != expected:
            raise DegenerateTransversal(
                f'Circle of radius {radius} around {component.label} winds {winding} times around {q.label}')
    return Loop(base, path, component.label, radius)


@dataclass
class MonodromyMatrix:
    M: np.ndarray
    loop: Loop
    condition: float
    steps: int = 0

    @property
    def distance_from_identity(self):
        return float(np.linalg.norm(self.M - np.eye(self.M.shape[0]), 2))


def monodromy(system, loop, config=None):
    """Transport of the identity frame once around the loop"""
    config = settings(config)
    result = transport(system, loop.path, config=config)
    M = result.matrix
    singular = svdvals(M)
    if singular[-1] <= config['singular_tol'] * singular[0]:
        raise StepUnderflow(f'Monodromy around {loop.component} is numerically singular '
                            f'(smallest singular value {singular[-1]:.2e})')
    # ratio of the largest to the smallest accepted step over the loop
    condition = result.step_ratio
    logger.debug('monodromy around %s: ||M - I|| = %.3e', loop.component,
                 np.linalg.norm(M - np.eye(M.shape[0]), 2))
    return MonodromyMatrix(M, loop, condition, result.steps)


@dataclass
class ResidueData:
    component: str
    matrix: list
    sample: np.ndarray
    sample_point: np.ndarray
    eigenvalues: np.ndarray
    diagonalizable: bool
    pole_order: int

    @property
    def predicted_monodromy(self):
        return expm(-2j * np.pi * self.sample)

    def formatted(self):
        return [[format_rational(e) for e in row] for row in self.matrix]


@dataclass
class ResidueVerdict:
    """predicted_trivial is None when the criterion does not apply (Inconclusive)"""
    predicted_trivial: bool
    data: ResidueData = None
    reason: str = ''

    @property
    def inconclusive(self):
        return self.predicted_trivial is None


def residue_criterion(system, component, config=None, rng=None):
    """Integer, diagonalizable residue along a first-order pole predicts trivial local monodromy"""
    config = settings(config)
    st = straighten(system.chart, component)
    moved = pull_back_system(system, st.chart, st.old_of_new)
    w1 = st.chart.divisor[0]
    coefficient = entries(moved.matrices[0])
    orders = [order_along(e, w1) for row in coefficient for e in row if e]
    pole_order = max(0, -min(orders)) if orders else 0
    if pole_order > 1:
        logger.info('residue criterion along %s: pole of order %d, inconclusive', component.label, pole_order)
        return ResidueVerdict(None, reason=f'pole of order {pole_order} along {component.label}')
    chart = st.chart
    gens = chart.gens
    images = [chart.zero] + list(gens[1:])
    residue = [[substitute(e * gens[0], images, chart.field) if e else chart.zero for e in row]
               for row in coefficient]
    rng = rng if rng is not None else np.random.default_rng(config['seed'])
    evaluator = NumericEvaluator(chart, [e for row in residue for e in row], shape=(system.rank, system.rank))
    for _ in range(64):
        rest = [to_complex(random_rational(rng)) for _ in range(chart.nvars - 1)]
        point = np.array([0.0] + rest, dtype=complex)
        try:
            sample = evaluator(point)
            break
        except NearPoleEvaluation:
            continue
    else:
        raise NearPoleEvaluation(f'No regular sample point found on {component.label}')
    eigenvalues, vectors = np.linalg.eig(sample)
    integral = bool(np.all(np.abs(eigenvalues - np.round(eigenvalues.real)) < config['integrality_tol']))
    diagonalizable = bool(np.linalg.cond(vectors) < config['diagonalizable_cond'])
    data = ResidueData(component.label, residue, sample, np.array(st.to_old(point)), eigenvalues,
                       diagonalizable, pole_order)
    verdict = integral and diagonalizable
    logger.info('residue criterion along %s: eigenvalues %s, trivial = %s', component.label, eigenvalues, verdict)
    return ResidueVerdict(verdict, data)


def invariance_angle(M, basis):
    """Largest principal angle between M(span basis) and span basis"""
    if basis.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(M @ basis, basis)))


def restrict(M, basis, config=None):
    """Matrix of M on an invariant subspace with orthonormal basis"""
    config = settings(config)
    angle = invariance_angle(M, basis)
    if angle > config['subspace_angle_tol']:
        raise NotInvariant(f'Subspace is not invariant under monodromy (principal angle {angle:.2e})')
    return basis.conj().T @ M @ basis


@dataclass
class ComponentExtension:
    component: str
    trivial_local_monodromy: bool
    distance: float
    monodromy: MonodromyMatrix
    residue: ResidueVerdict = None
    diagnostic: str = ''


@dataclass
class ExtensionVerdict:
    components: dict = field(default_factory=dict)

    @property
    def extends(self):
        return all(c.trivial_local_monodromy for c in self.components.values())

    @property
    def evidence(self):
        return [c.distance for c in self.components.values()]


def extension_property(system, basepoint, subspace=None, config=None):
    """Trivial local monodromy around every component (optionally on an invariant subspace)"""
    config = settings(config)
    basis = None if subspace is None else getattr(subspace, 'basis', subspace)
    components = list(system.chart.divisor)
    loops = [loop_around(system.chart, q, basepoint, config=config) for q in components]

    with ThreadPoolExecutor(max_workers=int(config['workers'])) as pool:
        matrices = list(pool.map(lambda loop: monodromy(system, loop, config), loops))

    verdict = ExtensionVerdict()
    for q, mono in zip(components, matrices):
        M = mono.M if basis is None else restrict(mono.M, basis, config)
        distance = float(np.linalg.norm(M - np.eye(M.shape[0]), 2))
        trivial = distance < config['monodromy_trivial_tol']
        residue = residue_criterion(system, q, config)
        diagnostic = ''
        if basis is None and not residue.inconclusive and residue.predicted_trivial != trivial:
            diagnostic = (f'residue criterion predicts trivial = {residue.predicted_trivial}, '
                          f'transport gives ||M - I|| = {distance:.2e}')
            logger.warning('%s: %s', q.label, diagnostic)
        verdict.components[q.label] = ComponentExtension(q.label, trivial, distance, mono, residue, diagnostic)
    logger.info('extension property: %s', verdict.extends)
    return verdict


@dataclass
class QuotientMonodromy:
    matrix: np.ndarray
    complement: np.ndarray
    distance: float
    trivial: bool


def quotient_monodromy(system, A, loop, subspace=None, config=None):
    """Map induced by the monodromy on g / <A> (on the image of the subspace when given)"""
    config = settings(config)
    tol = config['subspace_angle_tol']
    a = np.asarray(A, dtype=complex).reshape(-1)
    if a.size != system.rank or not np.any(a):
        raise ValidationError(f'A must be a nonzero vector of length {system.rank}')
    a = a / np.linalg.norm(a)
    M = monodromy(system, loop, config).M
    basis = np.eye(system.rank, dtype=complex) if subspace is None else getattr(subspace, 'basis', subspace)
    coords = basis.conj().T @ a
    inside = np.linalg.norm(a - basis @ coords) < tol
    if inside:
        image = M @ a
        drift = np.linalg.norm(image - (a.conj() @ image) * a)
        if drift > tol * max(1.0, np.linalg.norm(image)):
            raise QuotientIllDefined(f'<A> is not invariant under monodromy (drift {drift:.2e})')
        complement = basis @ null_space(coords.conj().reshape(1, -1))
        induced = complement.conj().T @ M @ complement
    else:
        restrict(M, basis, config)
        projector = np.eye(system.rank) - np.outer(a, a.conj())
        projected = projector @ basis
        complement = np.linalg.qr(projected)[0]
        lift = basis @ np.linalg.pinv(projected)
        induced = complement.conj().T @ projector @ M @ lift @ complement
    distance = float(np.linalg.norm(induced - np.eye(induced.shape[0]), 2)) if induced.size else 0.0
    return QuotientMonodromy(induced, complement, distance, distance < config['monodromy_trivial_tol'])
