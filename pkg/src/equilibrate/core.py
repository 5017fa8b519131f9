"""Problem, metric and solution types shared by every solver module.

A problem is the composite convex program

    minimize  f(x) + alpha * ||z||_1   subject to  A x - B z = c

with ``f(x) = 0.5 x^T Q x + q^T x``.  The l1-composite form
``f(x) + alpha * ||F x||_1`` is the special case ``A = F``, ``B = I``,
``c = 0``, which is what you get when ``A``, ``B`` and ``c`` are omitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

RANK_TOL = 1e-10
SYM_TOL = 1e-12
PSD_TOL = 1e-10
EPS_FLOOR = 1e-8


class DimensionMismatchError(ValueError):
    """Raised when two problem fields disagree on a shared dimension."""

    def __init__(self, field_a, dim_a, field_b, dim_b):
        self.field_a, self.dim_a = field_a, dim_a
        self.field_b, self.dim_b = field_b, dim_b
        super().__init__(
            f"dimension mismatch: {field_a} has {dim_a} but {field_b} has {dim_b}"
        )


def _frozen(a, ndim=None, name="array"):
    arr = np.array(a, dtype=float, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def full_column_rank(mat, tol=RANK_TOL):
    """True when ``mat`` is injective, judged by singular values relative to the largest."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.shape[0] < mat.shape[1]:
        return False
    if mat.size == 0:
        return True
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[0] == 0.0:
        return False
    return bool(sv[-1] > tol * sv[0])


@dataclass(frozen=True)
class ProblemSpec:
    """Data of ``f(x) + alpha ||z||_1`` s.t. ``A x - B z = c``.

    ``A`` defaults to ``F``, ``B`` to the identity and ``c`` to zero, which
    gives the l1-composite problem ``f(x) + alpha ||F x||_1``.
    """

    quad_Q: np.ndarray
    quad_q: np.ndarray
    alpha: float
    F: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        Q = _frozen(self.quad_Q, 2, "quad_Q")
        q = _frozen(self.quad_q, 1, "quad_q")
        n = q.shape[0]
        F = _frozen(np.eye(n) if self.F is None else self.F, 2, "F")
        A = F if self.A is None else _frozen(self.A, 2, "A")
        p = A.shape[0]
        B = _frozen(np.eye(p) if self.B is None else self.B, 2, "B")
        c = _frozen(np.zeros(p) if self.c is None else self.c, 1, "c")
        set_ = object.__setattr__
        set_(self, "quad_Q", Q)
        set_(self, "quad_q", q)
        set_(self, "alpha", float(self.alpha))
        set_(self, "F", F)
        set_(self, "A", A)
        set_(self, "B", B)
        set_(self, "c", c)
        check_dimensions(self)

    @property
    def n(self):
        return self.quad_q.shape[0]

    @property
    def p(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.quad_Q @ x + self.quad_q @ x

    def grad_f(self, x):
        return self.quad_Q @ np.asarray(x, dtype=float) + self.quad_q

    def objective(self, x):
        """Value of ``f(x) + alpha ||F x||_1``."""
        return float(self.f(x) + self.alpha * np.abs(self.F @ x).sum())

    def is_l1_composite(self):
        """True when the constraint data encodes ``F x = z``."""
        return (
            self.A.shape == self.F.shape
            and np.array_equal(self.A, self.F)
            and self.B.shape[0] == self.B.shape[1]
            and np.array_equal(self.B, np.eye(self.B.shape[0]))
            and not np.any(self.c)
        )

    def b_diagonal(self):
        """Diagonal of ``B``; raises if ``B`` is not a square diagonal matrix."""
        B = self.B
        if B.shape[0] != B.shape[1] or np.any(B - np.diag(np.diag(B))):
            raise NotImplementedError(
                "only square diagonal B keeps the l1 z-update separable"
            )
        d = np.diag(B).copy()
        if np.any(d == 0):
            raise ValueError("B must be injective (nonzero diagonal)")
        return d


def check_dimensions(spec):
    """Raise :class:`DimensionMismatchError` for any inconsistent shape."""
    n = spec.quad_q.shape[0]
    Q = spec.quad_Q
    if Q.shape[0] != n:
        raise DimensionMismatchError("quad_Q rows", Q.shape[0], "quad_q", n)
    if Q.shape[1] != n:
        raise DimensionMismatchError("quad_Q columns", Q.shape[1], "quad_q", n)
    if spec.F.shape[1] != n:
        raise DimensionMismatchError("F columns", spec.F.shape[1], "quad_q", n)
    if spec.A.shape[1] != n:
        raise DimensionMismatchError("A columns", spec.A.shape[1], "quad_q", n)
    if spec.B.shape[0] != spec.A.shape[0]:
        raise DimensionMismatchError("B rows", spec.B.shape[0], "A rows", spec.A.shape[0])
    if spec.c.shape[0] != spec.A.shape[0]:
        raise DimensionMismatchError("c", spec.c.shape[0], "A rows", spec.A.shape[0])


@dataclass(frozen=True)
class Violation:
    field: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def valid(self):
        return not self.violations

    def __bool__(self):
        return self.valid

    def __str__(self):
        if self.valid:
            return "valid"
        return "; ".join(f"{v.field}: {v.message}" for v in self.violations)


def validate_problem(spec: ProblemSpec) -> ValidationReport:
    """Check every :class:`ProblemSpec` invariant and collect the violations.

    Dimension mismatches are raised as :class:`DimensionMismatchError`
    rather than reported, since nothing else can be checked meaningfully.
    """
    check_dimensions(spec)
    out = []
    Q = spec.quad_Q
    if not np.all(np.isfinite(Q)) or not np.all(np.isfinite(spec.quad_q)):
        out.append(Violation("quad_Q", "non-finite entries"))
    else:
        asym = np.max(np.abs(Q - Q.T)) if Q.size else 0.0
        if asym > SYM_TOL:
            out.append(Violation("quad_Q", f"not symmetric (max |Q - Q^T| = {asym:.3g})"))
        else:
            eig = np.linalg.eigvalsh(0.5 * (Q + Q.T)) if Q.size else np.zeros(0)
            if eig.size and eig[0] < -PSD_TOL:
                out.append(Violation("quad_Q", f"not PSD (min eigenvalue {eig[0]:.3g})"))
    if not (np.isfinite(spec.alpha) and spec.alpha > 0):
        out.append(Violation("alpha", f"must be positive, got {spec.alpha}"))
    for name in ("F", "A", "B"):
        mat = getattr(spec, name)
        if not full_column_rank(mat):
            out.append(Violation(name, "not full column rank"))
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class DiagonalMetric:
    """Diagonal metric with ``M^{-1} v = m * v``.

    ``M = diag(1 / m)`` and the decomposition ``M = S^T S`` uses
    ``S = diag(1 / sqrt(m))``.  ``clamped`` marks entries that came from a
    limit sentinel: ``"zero"`` (m -> 0) or ``"inf"`` (m -> inf).
    """

    m: np.ndarray
    eps_floor: float = EPS_FLOOR
    inf_ceiling: Optional[float] = None
    clamped: tuple = ()

    def __post_init__(self):
        m = _frozen(np.atleast_1d(self.m), 1, "m")
        ceiling = 1.0 / self.eps_floor if self.inf_ceiling is None else float(self.inf_ceiling)
        if not (self.eps_floor > 0 and ceiling >= self.eps_floor):
            raise ValueError("need 0 < eps_floor <= inf_ceiling")
        if np.any(~np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("metric entries must be finite and positive")
        clamped = tuple(self.clamped) if self.clamped else ("",) * m.shape[0]
        if len(clamped) != m.shape[0]:
            raise ValueError("clamped flags must match the metric length")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "inf_ceiling", ceiling)
        object.__setattr__(self, "clamped", clamped)

    @classmethod
    def scalar(cls, gamma, size):
        """The metric ``M = gamma I``."""
        return cls(np.full(size, 1.0 / gamma))

    @property
    def size(self):
        return self.m.shape[0]

    @property
    def M(self):
        return 1.0 / self.m

    @property
    def s(self):
        """Diagonal of ``S`` (``S = S^*``)."""
        return 1.0 / np.sqrt(self.m)

    def apply_M(self, v):
        return np.asarray(v) / self.m

    def apply_Minv(self, v):
        return self.m * np.asarray(v)

    def apply_S(self, v):
        return self.s * np.asarray(v)

    def apply_S_inv(self, v):
        return np.sqrt(self.m) * np.asarray(v)

    def at_floor(self):
        """Mask of entries pinned at ``eps_floor`` (the m -> 0 limit)."""
        return self.m <= self.eps_floor


def metric_from_vector(m, eps_floor=EPS_FLOOR, inf_ceiling=None) -> DiagonalMetric:
    """Build a :class:`DiagonalMetric`, clamping limit sentinels.

    ``0`` stands for the limit m -> 0 and ``inf`` for m -> inf; they are
    clamped to ``eps_floor`` and ``inf_ceiling`` (default ``1/eps_floor``)
    and flagged.  Finite entries outside the window are clamped too.
    Negative or NaN entries are rejected.
    """
    m = np.array(np.atleast_1d(m), dtype=float)
    if np.any(np.isnan(m)):
        raise ValueError("metric entries must not be NaN")
    if np.any(m < 0):
        raise ValueError("metric must be positive definite: negative entry in m")
    ceiling = 1.0 / eps_floor if inf_ceiling is None else float(inf_ceiling)
    flags = []
    for i, v in enumerate(m):
        if v == 0:
            flags.append("zero")
        elif np.isinf(v):
            flags.append("inf")
        else:
            flags.append("")
    out = np.clip(np.where(np.isinf(m), ceiling, m), eps_floor, ceiling)
    return DiagonalMetric(out, eps_floor=eps_floor, inf_ceiling=ceiling, clamped=tuple(flags))


@dataclass(frozen=True)
class SolutionPair:
    """Primal/dual pair with the objective and optimality residual at ``x_star``."""

    x_star: np.ndarray
    lambda_star: np.ndarray
    objective: float
    residual: float
    tol: float = np.inf
    z_star: Optional[np.ndarray] = None
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x_star", _frozen(self.x_star, 1, "x_star"))
        object.__setattr__(self, "lambda_star", _frozen(self.lambda_star, 1, "lambda_star"))
        if self.z_star is not None:
            object.__setattr__(self, "z_star", _frozen(self.z_star, 1, "z_star"))

    @property
    def converged(self):
        return bool(self.residual <= self.tol)


_TAGS = ("classical_scalar", "classical_metric", "equilibrate_scalar", "equilibrate_operator")


@dataclass(frozen=True)
class Parametrization:
    """Which parametrization a proximal step or solver uses.

    ``value`` is gamma, a :class:`DiagonalMetric`, rho, or the linear map
    ``S`` (vector for diagonal, matrix otherwise), depending on ``tag``.
    """

    tag: str
    value: object = field(default=None)

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValueError(f"unknown parametrization tag {self.tag!r}")
        v = self.value
        if self.tag == "classical_scalar" and not (np.isscalar(v) and v > 0):
            raise ValueError("classical step gamma must be a positive scalar")
        if self.tag == "equilibrate_scalar" and not (np.isscalar(v) and v != 0):
            raise ValueError("equilibrate scalar rho must be nonzero")
        if self.tag == "classical_metric" and not isinstance(v, DiagonalMetric):
            raise ValueError("classical metric parametrization needs a DiagonalMetric")
        if self.tag == "equilibrate_operator" and not isinstance(v, DiagonalMetric):
            arr = np.asarray(v, dtype=float)
            bad = np.any(arr == 0) if arr.ndim == 1 else not full_column_rank(arr)
            if bad:
                raise ValueError("equilibrate operator S must have full column rank")

    @classmethod
    def classical_scalar(cls, gamma):
        return cls("classical_scalar", float(gamma))

    @classmethod
    def classical_metric(cls, metric):
        return cls("classical_metric", metric)

    @classmethod
    def equilibrate_scalar(cls, rho):
        return cls("equilibrate_scalar", float(rho))

    @classmethod
    def equilibrate_operator(cls, S):
        return cls("equilibrate_operator", S)

    def describe(self):
        if self.tag in ("classical_scalar", "equilibrate_scalar"):
            return f"{self.tag}({self.value:g})"
        return self.tag


def as_vector(v: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.atleast_1d(np.asarray(v, dtype=float))
