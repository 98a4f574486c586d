"""Piecewise paths in C^n and horizontal transport of linear systems along them."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from src.config import settings
from src.models.errors import PoleApproach, StepUnderflow

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LineSegment:
    start: np.ndarray
    end: np.ndarray

    def point(self, s):
        return self.start + s * (self.end - self.start)

    def velocity(self, s):
        return self.end - self.start


@dataclass(frozen=True)
class CircleSegment:
    """center + radius * exp(i (angle + 2 pi turns s)) * direction, s in [0, 1]"""
    center: np.ndarray
    direction: np.ndarray
    radius: float
    angle: float = 0.0
    turns: int = 1

    def point(self, s):
        return self.center + self.radius * np.exp(1j * (self.angle + 2 * np.pi * self.turns * s)) * self.direction

    def velocity(self, s):
        phase = np.exp(1j * (self.angle + 2 * np.pi * self.turns * s))
        return 2j * np.pi * self.turns * self.radius * phase * self.direction


@dataclass(frozen=True)
class Path:
    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, 'segments', tuple(self.segments))

    @classmethod
    def polyline(cls, points):
        points = [np.asarray(p, dtype=complex) for p in points]
        return cls(tuple(LineSegment(a, b) for a, b in zip(points, points[1:])))

    @property
    def start(self):
        return self.segments[0].point(0.0)

    @property
    def end(self):
        return self.segments[-1].point(1.0)

    @property
    def is_closed(self):
        return np.allclose(self.start, self.end, atol=1e-12)

    def then(self, other):
        return Path(self.segments + other.segments)

    def sample(self, per_segment=64):
        """Points along the path, per_segment per piece"""
        grid = np.linspace(0.0, 1.0, per_segment, endpoint=False)
        points = [seg.point(s) for seg in self.segments for s in grid]
        points.append(self.end)
        return np.array(points)


def _sampled_moduli(chart, path, samples):
    per_segment = max(8, samples // max(1, len(path.segments)))
    points = path.sample(per_segment)
    return points, np.array([np.min(chart.divisor_moduli(p)) for p in points])


def path_clearance(chart, path, samples=512):
    """Smallest divisor modulus along the sampled path"""
    if not chart.divisor:
        return np.inf
    return float(np.min(_sampled_moduli(chart, path, samples)[1]))


def check_clearance(chart, path, config):
    """Raise PoleApproach when the path comes closer to the divisor than `path_clearance`"""
    if not chart.divisor:
        return
    points, moduli = _sampled_moduli(chart, path, int(config['loop_samples']))
    close = np.flatnonzero(moduli < config['path_clearance'])
    if close.size:
        first = int(close[0])
        raise PoleApproach(
            f'Path comes within {moduli[first]:.2e} of the divisor at {np.round(points[first], 12).tolist()}',
            last_state=points[first - 1] if first else None,
            trajectory=points[:first],
        )


@dataclass
class TransportResult:
    matrix: np.ndarray
    nfev: int = 0
    steps: int = 0
    step_sizes: np.ndarray = None

    @property
    def step_ratio(self):
        """Largest over smallest accepted step, 1 for an empty record"""
        if self.step_sizes is None or not self.step_sizes.size:
            return 1.0
        return float(np.max(self.step_sizes) / np.min(self.step_sizes))


def _check(sol, where):
    if sol.status < 0:
        raise StepUnderflow(f'{where}: {sol.message}')


def transport_segment(rhs_matrix, segment, initial, tol):
    """Solve dY/ds = -M(gamma(s), gamma'(s)) Y on s in [0, 1]"""
    size = initial.shape[0]

    def rhs(s, y):
        Y = y.reshape(initial.shape)
        M = rhs_matrix(segment.point(s), segment.velocity(s))
        return (-M @ Y).reshape(-1)

    sol = solve_ivp(rhs, (0.0, 1.0), initial.astype(complex).reshape(-1),
                    method='DOP853', rtol=tol, atol=tol)
    _check(sol, 'transport')
    return sol.y[:, -1].reshape(size, -1), sol.nfev, np.diff(sol.t)


def transport(system, path, initial=None, config=None):
    """Horizontal transport (d + A) s = 0 along `path`; returns the fundamental matrix"""
    config = settings(config)
    check_clearance(system.chart, path, config)
    Y = np.eye(system.rank, dtype=complex) if initial is None else np.asarray(initial, dtype=complex)
    nfev = 0
    sizes = []
    for segment in path.segments:
        Y, fev, h = transport_segment(system.contracted, segment, Y, config['transport_tol'])
        nfev += fev
        sizes.append(h)
    sizes = np.concatenate(sizes) if sizes else np.zeros(0)
    steps = int(sizes.size)
    logger.debug('transport over %d segments: %d steps, %d evaluations', len(path.segments), steps, nfev)
    return TransportResult(Y, nfev, steps, sizes)
