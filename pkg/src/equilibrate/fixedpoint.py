"""Fixed-point iteration with trace recording and averaged-map diagnostics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SLACK = 1e-9


class NonAveragedMapError(RuntimeError):
    """Raised when step norms keep growing, which an averaged map cannot do."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class Trace:
    """Iterates ``zeta^k`` of a fixed-point run and derived quantities.

    ``step_norms[k] = ||zeta^{k+1} - zeta^k||`` so there is one fewer step
    norm than points.  ``fix_distances`` is filled only when a reference
    fixed point is known.  ``states`` optionally carries solver-specific
    per-iteration records (for ADMM: ``(x, z, lambda)`` triples).
    """

    points: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    fix_distances: list = field(default_factory=list)
    theta: float = 0.5
    states: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    reference: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.points)

    def set_reference(self, zeta_star):
        """Fill ``fix_distances`` against ``zeta_star``."""
        self.reference = np.asarray(zeta_star, dtype=float)
        self.fix_distances = [float(np.linalg.norm(p - self.reference)) for p in self.points]
        return self

    def dist0_sq(self):
        if self.reference is None:
            raise ValueError("trace has no reference fixed point")
        return float(np.sum((self.points[0] - self.reference) ** 2))

    def to_csv(self, dist0_sq=None):
        """CSV text with columns ``k, step_norm, fix_distance, bound``.

        ``bound`` is the square root of the rate bound on the step norm, so
        it is directly comparable with ``step_norm``.  Empty cells mean the
        quantity is unavailable.
        """
        if dist0_sq is None and self.reference is not None:
            dist0_sq = self.dist0_sq()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "step_norm", "fix_distance", "bound"])
        for k in range(len(self.points)):
            step = repr(float(self.step_norms[k])) if k < len(self.step_norms) else ""
            fd = repr(float(self.fix_distances[k])) if k < len(self.fix_distances) else ""
            bound = ""
            if dist0_sq is not None and k < len(self.step_norms):
                bound = repr(float(np.sqrt(rate_bound(self.theta, k, dist0_sq))))
            w.writerow([k, step, fd, bound])
        return buf.getvalue()


def _diverging(steps, window=3, rel=1e-6):
    if len(steps) <= window:
        return False
    tail = steps[-(window + 1):]
    floor = 1e-14 * (1.0 + max(tail))
    return all(b > a * (1.0 + rel) + floor for a, b in zip(tail[:-1], tail[1:]))


def iterate(
    fmap: Callable[[np.ndarray], np.ndarray],
    z0,
    k_max: int = 1000,
    tol: float = 1e-10,
    theta: float = 0.5,
    reference=None,
    check_divergence: bool = True,
) -> Trace:
    """Run ``zeta^{k+1} = fmap(zeta^k)`` from ``z0``.

    Stops after ``k_max`` applications or once a step norm drops to
    ``tol``.  Raises :class:`NonAveragedMapError` if the step norm grows by
    more than 1e-6 (relative) three times in a row.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    if not tol > 0:
        raise ValueError("tol must be positive")
    z = np.atleast_1d(np.asarray(z0, dtype=float)).copy()
    trace = Trace(points=[z], theta=theta)
    for _ in range(k_max):
        z_new = np.asarray(fmap(z), dtype=float)
        step = float(np.linalg.norm(z_new - z))
        trace.points.append(z_new)
        trace.step_norms.append(step)
        z = z_new
        if check_divergence and _diverging(trace.step_norms):
            raise NonAveragedMapError(
                f"step norm increased for 3 consecutive iterations (last {step:.3e})", trace
            )
        if step <= tol:
            break
    if reference is not None:
        trace.set_reference(reference)
    return trace


def rate_bound(theta, k, dist0_sq):
    """``theta * dist0_sq / ((k + 1) (1 - theta))``."""
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if k < 0 or dist0_sq < 0:
        raise ValueError("k and dist0_sq must be nonnegative")
    return theta * dist0_sq / ((k + 1) * (1.0 - theta))


@dataclass(frozen=True)
class RateReport:
    passed: bool
    worst_ratio: float
    worst_k: int
    violations: tuple

    def __bool__(self):
        return self.passed


def verify_rate(trace: Trace, dist0_sq, slack=SLACK) -> RateReport:
    """Check every squared step norm against :func:`rate_bound`.

    ``worst_ratio`` is the largest ``step^2 / bound`` seen (values up to 1
    are admissible).
    """
    worst, worst_k, bad = 0.0, -1, []
    for k, step in enumerate(trace.step_norms):
        bound = rate_bound(trace.theta, k, dist0_sq)
        lhs = step * step
        ratio = lhs / bound if bound > 0 else (0.0 if lhs == 0 else np.inf)
        if ratio > worst:
            worst, worst_k = ratio, k
        if lhs > bound * (1.0 + slack) + (slack * slack if bound == 0 else 0.0):
            bad.append(k)
    return RateReport(not bad, float(worst), worst_k, tuple(bad))


@dataclass(frozen=True)
class MonotonicityReport:
    step_norms_ok: bool
    fix_distances_ok: bool
    first_step_violation: int = -1
    first_distance_violation: int = -1

    @property
    def passed(self):
        return self.step_norms_ok and self.fix_distances_ok

    def __bool__(self):
        return self.passed


def _first_increase(seq, slack):
    seq = list(seq)
    scale = max((abs(s) for s in seq), default=0.0)
    for k in range(1, len(seq)):
        if seq[k] > seq[k - 1] + slack * (1.0 + scale):
            return k
    return -1


def check_monotone(trace: Trace, slack=SLACK) -> MonotonicityReport:
    """Both step norms and fixed-point distances must be nonincreasing."""
    a = _first_increase(trace.step_norms, slack)
    b = _first_increase(trace.fix_distances, slack)
    return MonotonicityReport(a < 0, b < 0, a, b)


@dataclass(frozen=True)
class ScalingReport:
    passed: bool
    max_deviation: float
    worst_k: int
    scale: float

    def __bool__(self):
        return self.passed


def check_parallel_scaling(traceA: Trace, traceB: Trace, alpha, rtol=1e-8) -> ScalingReport:
    """Compare ``alpha^-1 A_k`` with ``alpha B_k`` over every recorded ``k``.

    Passes when the largest deviation is at most ``rtol * (1 + scale)``,
    ``scale`` being the largest norm among the compared vectors.
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    pa, pb = traceA.points, traceB.points
    if len(pa) != len(pb):
        raise ValueError(f"trace lengths differ: {len(pa)} vs {len(pb)}")
    dev, worst_k, scale = 0.0, -1, 0.0
    for k, (a, b) in enumerate(zip(pa, pb)):
        u, w = np.asarray(a) / alpha, alpha * np.asarray(b)
        d = float(np.linalg.norm(u - w))
        scale = max(scale, float(np.linalg.norm(u)), float(np.linalg.norm(w)))
        if d > dev:
            dev, worst_k = d, k
    return ScalingReport(dev <= rtol * (1.0 + scale), dev, worst_k, scale)


def trace_from_points(points, theta=0.5, reference=None) -> Trace:
    """Build a :class:`Trace` from an existing point sequence."""
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    steps = [float(np.linalg.norm(b - a)) for a, b in zip(pts[:-1], pts[1:])]
    tr = Trace(points=pts, step_norms=steps, theta=theta)
    if reference is not None:
        tr.set_reference(reference)
    return tr
