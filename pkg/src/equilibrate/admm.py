"""Classical ADMM, equilibrate ADMM (E-ADMM) and their fixed-point maps.

Both solvers target

    minimize f(x) + alpha ||z||_1   s.t.  A x - B z = c

with quadratic ``f`` and square diagonal ``B`` (so the z-update stays a
componentwise soft-threshold).  E-ADMM runs the same three updates in the
metric ``M = S^T S`` of a :class:`~equilibrate.core.DiagonalMetric`; with
``M = gamma I`` it reproduces classical ADMM with step ``gamma``.

The fixed-point coordinate is ``zeta^{k+1} = S A x^{k+1} + lambda^k / s``
(classical: ``A x^{k+1} + lambda^k / gamma``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import DiagonalMetric, Parametrization, ProblemSpec, SolutionPair
from .fixedpoint import Trace
from .prox import ProxSpec, prox_equilibrate


class NonConvergenceError(RuntimeError):
    """ADMM hit ``k_max`` before the stopping residual reached ``tol``."""

    def __init__(self, message, residual=np.inf, solution=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.solution = solution
        self.trace = trace


@dataclass(frozen=True)
class AdmmState:
    """Iterate triple plus the fixed-point coordinate ``zeta``."""

    x: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    zeta: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, spec: ProblemSpec):
        return cls(np.zeros(spec.n), np.zeros(spec.m), np.zeros(spec.p))


@dataclass
class AdmmConfig:
    """Iteration budget and stopping rule.

    ``stop`` selects the residual compared against ``tol``:
    ``"kkt"`` (optimality residual of ``x``, l1-composite problems only),
    ``"primal_dual"`` (max of constraint and stationarity violation),
    ``"fixed_point"`` (``||zeta^{k+1} - zeta^k||``) or ``"auto"`` (kkt when
    applicable, primal_dual otherwise).
    """

    parametrization: Optional[Parametrization] = None
    k_max: int = 10000
    tol: float = 1e-8
    record_trace: bool = True
    stop: str = "auto"
    raise_on_failure: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.stop not in ("auto", "kkt", "primal_dual", "fixed_point"):
            raise ValueError(f"unknown stopping rule {self.stop!r}")


def _l1_prox(w, e, alpha):
    # argmin alpha |z| + 0.5 (e z - w)^2, componentwise
    u = w / e
    return np.sign(u) * np.maximum(np.abs(u) - alpha / (e * e), 0.0)


def primal_dual_residual(spec: ProblemSpec, x, z, lam):
    """``max(||A x - B z - c||, ||grad f(x) + A^T lambda||)``."""
    rp = np.linalg.norm(spec.A @ x - spec.B @ z - spec.c)
    rd = np.linalg.norm(spec.grad_f(x) + spec.A.T @ lam)
    return float(max(rp, rd))


class _Stopper:
    def __init__(self, spec, cfg):
        rule = cfg.stop
        if rule == "auto":
            rule = "kkt" if spec.is_l1_composite() else "primal_dual"
        if rule == "kkt" and not spec.is_l1_composite():
            raise ValueError("kkt stopping needs an l1-composite problem (A = F, B = I, c = 0)")
        self.rule, self.spec = rule, spec
        if rule == "kkt":
            from .metric_select import residual_function

            self._kkt = residual_function(spec)

    def __call__(self, x, z, lam, step):
        if self.rule == "kkt":
            return self._kkt(x)
        if self.rule == "primal_dual":
            return primal_dual_residual(self.spec, x, z, lam)
        return step


def _solution(spec, x, z, lam, residual, tol, k):
    obj = float(spec.f(x) + spec.alpha * np.abs(z).sum())
    if spec.is_l1_composite():
        obj = spec.objective(x)
    return SolutionPair(x, lam, obj, float(residual), tol=tol, z_star=z, iterations=k)


def _run(spec, cfg, init, factor, x_rhs, z_update, lam_update, zeta_of):
    stopper = _Stopper(spec, cfg)
    x = np.array(init.x, dtype=float)
    z = np.array(init.z, dtype=float)
    lam = np.array(init.lam, dtype=float)
    zeta = zeta_of(x, z, lam, None) if init.zeta is None else np.array(init.zeta, dtype=float)
    trace = Trace(points=[zeta], theta=0.5)
    if cfg.record_trace:
        trace.states.append((x, z, lam))
    residual, k = np.inf, 0
    for k in range(1, cfg.k_max + 1):
        x = cho_solve(factor, x_rhs(z, lam))
        z = z_update(x, lam)
        lam_prev, lam = lam, lam_update(x, z, lam)
        new_zeta = zeta_of(x, z, lam, lam_prev)
        step = float(np.linalg.norm(new_zeta - zeta))
        zeta = new_zeta
        residual = stopper(x, z, lam, step)
        if cfg.record_trace:
            trace.points.append(zeta)
            trace.step_norms.append(step)
            trace.states.append((x, z, lam))
            trace.residuals.append(residual)
        if residual <= cfg.tol:
            break
    sol = _solution(spec, x, z, lam, residual, cfg.tol, k)
    if not sol.converged and cfg.raise_on_failure:
        raise NonConvergenceError(
            f"no convergence in {cfg.k_max} iterations (residual {residual:.3e})",
            residual, sol, trace,
        )
    return sol, trace


def admm_classical(spec: ProblemSpec, gamma, init: Optional[AdmmState] = None,
                   cfg: Optional[AdmmConfig] = None):
    """Classical scaled-step ADMM with step ``gamma``.

    Returns ``(SolutionPair, Trace)``; trace points are
    ``zeta = A x + lambda / gamma``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    cfg = cfg or AdmmConfig(Parametrization.classical_scalar(gamma))
    init = init or AdmmState.zeros(spec)
    _check_init(spec, init)
    A, b, c, alpha = spec.A, spec.b_diagonal(), spec.c, spec.alpha
    factor = cho_factor(spec.quad_Q + gamma * A.T @ A)

    def x_rhs(z, lam):
        return gamma * A.T @ (b * z + c - lam / gamma) - spec.quad_q

    def z_update(x, lam):
        w = A @ x - c + lam / gamma
        return np.sign(w / b) * np.maximum(np.abs(w / b) - alpha / (gamma * b * b), 0.0)

    def lam_update(x, z, lam):
        return lam + gamma * (A @ x - b * z - c)

    def zeta_of(x, z, lam, lam_prev):
        if lam_prev is None:
            return b * z + c + lam / gamma
        return A @ x + lam_prev / gamma

    return _run(spec, cfg, init, factor, x_rhs, z_update, lam_update, zeta_of)


def admm_equilibrate(spec: ProblemSpec, M: DiagonalMetric, init: Optional[AdmmState] = None,
                     cfg: Optional[AdmmConfig] = None):
    """E-ADMM in the metric ``M = S^T S`` (``S = diag(1/sqrt(m))``).

    Updates::

        x+   = (SA)^{-1} Prox_{f (SA)^{-1}}(S c + S B z - lambda / s)
        z+   = (SB)^{-1} Prox_{g (SB)^{-1}}(-S c + S A x+ + lambda / s)
        lam+ = lam + M (A x+ - B z+ - c)

    Returns ``(SolutionPair, Trace)``; trace points are
    ``zeta = S A x + lambda_prev / s``.
    """
    if M.size != spec.p:
        raise ValueError(f"metric has size {M.size} but the constraint has {spec.p} rows")
    cfg = cfg or AdmmConfig(Parametrization.classical_metric(M))
    init = init or AdmmState.zeros(spec)
    _check_init(spec, init)
    s = M.s
    SA = s[:, None] * spec.A
    Sc = s * spec.c
    e = s * spec.b_diagonal()
    alpha, q = spec.alpha, spec.quad_q
    factor = cho_factor(spec.quad_Q + SA.T @ SA)

    def x_rhs(z, lam):
        return SA.T @ (Sc + e * z - lam / s) - q

    def z_update(x, lam):
        return _l1_prox(SA @ x - Sc + lam / s, e, alpha)

    def lam_update(x, z, lam):
        return lam + M.apply_M(spec.A @ x - spec.B @ z - spec.c)

    def zeta_of(x, z, lam, lam_prev):
        if lam_prev is None:
            return e * z + Sc + lam / s
        return SA @ x + lam_prev / s

    return _run(spec, cfg, init, factor, x_rhs, z_update, lam_update, zeta_of)


def _check_init(spec, init):
    for name, vec, dim in (("x", init.x, spec.n), ("z", init.z, spec.m), ("lambda", init.lam, spec.p)):
        if np.shape(vec) != (dim,):
            raise ValueError(f"initial {name} has shape {np.shape(vec)}, expected ({dim},)")


# --- fixed-point maps -----------------------------------------------------

@dataclass(frozen=True)
class _DrsPair:
    """Primal and dual prox operators of a transformed splitting.

    With ``D = S A``, ``E = S B``, ``t = S c`` and ``gamma = 1`` these are
    the equilibrate operators; with ``D = A``, ``E = B``, ``t = c`` they are
    the classical ones for step ``gamma``.
    """

    f: ProxSpec
    g: ProxSpec
    D: np.ndarray
    E: np.ndarray
    t: np.ndarray
    gamma: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def _root(self):
        return np.sqrt(self.gamma)

    # primal side: f(D^-1 u) and g(E^-1 (u - t)), both scaled by 1/gamma
    def prox_f(self, v):
        r = self._root()
        return prox_equilibrate(self.f, r * self.D, r * v) / r

    def prox_g(self, v):
        r = self._root()
        return self.t + prox_equilibrate(self.g, r * self.E, r * (v - self.t)) / r

    # dual side: conjugates, f-part pre-composed with -I, both scaled by gamma
    def _inv_adj(self, key, mat):
        if key not in self._cache:
            if mat.ndim == 1:
                self._cache[key] = 1.0 / mat
            else:
                if mat.shape[0] != mat.shape[1]:
                    raise ValueError("dual operators need square (bijective) A and B")
                self._cache[key] = np.linalg.inv(mat).T
        return self._cache[key]

    def dual_prox_f(self, v):
        r = self._root()
        L = -self._inv_adj("D", self.D) / r
        return r * prox_equilibrate(self._conj("f"), L, v / r)

    def dual_prox_g(self, v):
        r = self._root()
        L = self._inv_adj("E", self.E) / r
        return r * prox_equilibrate(self._conj("g"), L, (v - self.gamma * self.t) / r)

    def _conj(self, which):
        key = "conj_" + which
        if key not in self._cache:
            self._cache[key] = ProxSpec.conjugate(getattr(self, which))
        return self._cache[key]

    def primal_map(self, zeta):
        pg = self.prox_g(zeta)
        return self.prox_f(2.0 * pg - zeta) + zeta - pg

    def dual_map(self, psi):
        pg = self.dual_prox_g(psi)
        return self.dual_prox_f(2.0 * pg - psi) + psi - pg


def _functions(spec, g=None):
    f = ProxSpec.quadratic(spec.quad_Q, spec.quad_q)
    return f, (ProxSpec.l1(spec.alpha) if g is None else g)


def _as_matrix(S, rows):
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        return S
    if S.shape[0] == S.shape[1] and not np.any(S - np.diag(np.diag(S))):
        return np.diag(S).copy()
    return S


def _pair_equilibrate(spec, M, g=None):
    s = M.s
    f, g = _functions(spec, g)
    E = _as_matrix(s[:, None] * spec.B, spec.p)
    return _DrsPair(f, g, s[:, None] * spec.A, E, s * spec.c)


def _pair_classical(spec, gamma, g=None):
    f, g = _functions(spec, g)
    return _DrsPair(f, g, np.asarray(spec.A), _as_matrix(spec.B, spec.p), np.asarray(spec.c), float(gamma))


def admm_fixed_point_map(spec: ProblemSpec, M: DiagonalMetric):
    """The E-ADMM map ``zeta^k -> zeta^{k+1}``.

    It is ``0.5 R_f R_g + 0.5 I`` with ``R = 2 Prox - I`` for the
    transformed pair ``u -> f((SA)^-1 u)`` and ``u -> g((SB)^-1 (u - S c))``;
    the second prox is evaluated as a tilted equilibrate prox.
    """
    return _pair_equilibrate(spec, M).primal_map


def classical_fixed_point_map(spec: ProblemSpec, gamma):
    """Classical counterpart acting on ``zeta = A x + lambda_prev / gamma``."""
    return _pair_classical(spec, gamma).primal_map


def dual_fixed_point_map(spec: ProblemSpec, param):
    """Dual-side map built from conjugate proxes.

    ``param`` is a :class:`DiagonalMetric` (equilibrate) or a positive
    scalar ``gamma`` (classical).
    """
    if isinstance(param, DiagonalMetric):
        return _pair_equilibrate(spec, param).dual_map
    return _pair_classical(spec, param).dual_map


@dataclass(frozen=True)
class DualityReport:
    passed: bool
    max_deviation: float
    iterations: int
    primal: Trace = field(repr=False, default=None)
    dual: Trace = field(repr=False, default=None)

    def __bool__(self):
        return self.passed


def _run_map(fmap, z0, k):
    pts = [np.asarray(z0, dtype=float)]
    for _ in range(k):
        pts.append(fmap(pts[-1]))
    from .fixedpoint import trace_from_points

    return trace_from_points(pts)


def self_duality_check(spec: ProblemSpec, M: DiagonalMetric, z0=None, k=50, tol=1e-8):
    """Iterate the primal and the dual E-ADMM maps from ``z0`` and compare.

    The dual map is assembled from the conjugates ``f^*`` and ``g^*`` only,
    so agreement is a genuine check.  Requires square ``A`` and ``B``.
    """
    pair = _pair_equilibrate(spec, M)
    z0 = np.zeros(spec.p) if z0 is None else np.asarray(z0, dtype=float)
    tp = _run_map(pair.primal_map, z0, k)
    td = _run_map(pair.dual_map, z0, k)
    dev = max(float(np.linalg.norm(a - b)) for a, b in zip(tp.points, td.points))
    scale = max(float(np.linalg.norm(a)) for a in tp.points)
    return DualityReport(dev <= tol * (1.0 + scale), dev, k, tp, td)


def classical_duality_traces(spec: ProblemSpec, gamma, k=50, z0=None):
    """Primal trace ``zeta`` and dual trace ``psi`` of classical ADMM.

    Started from ``psi^0 = gamma zeta^0`` (zero by default); the two are
    related by ``psi^k = gamma zeta^k``.
    """
    pair = _pair_classical(spec, gamma)
    z0 = np.zeros(spec.p) if z0 is None else np.asarray(z0, dtype=float)
    return _run_map(pair.primal_map, z0, k), _run_map(pair.dual_map, gamma * z0, k)


def reference_zeta(spec: ProblemSpec, M: DiagonalMetric, x_star, lambda_star, z_star=None):
    """``zeta^* = S A x^* + lambda^* / s``.

    Given ``z_star``, ``A x^*`` is replaced by ``B z^* + c`` (equal at a
    solution).  The sparse ``z^*`` keeps tiny off-support noise in ``x^*``
    from being amplified by large entries of ``s``.
    """
    s = M.s
    ax = spec.A @ x_star if z_star is None else spec.B @ z_star + spec.c
    return s * ax + lambda_star / s


# --- unified dual -----------------------------------------------------------

@dataclass(frozen=True)
class DualProblem:
    """``minimize 0.5 y^T P y + r^T y + const`` over ``lower <= y <= upper``.

    This is the one-variable dual ``f~^*(-y) + g~^*(y) + <y, c~>`` in the
    scaled dual variable ``y`` (``lambda / s`` or ``lambda / gamma``).
    Strong duality reads ``primal_scale * p^* + d^* = 0``.
    """

    P: np.ndarray
    r: np.ndarray
    const: float
    lower: np.ndarray
    upper: np.ndarray
    primal_scale: float
    dual_scale: np.ndarray  # y = lambda * dual_scale
    parametrization: str

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return float(0.5 * y @ self.P @ y + self.r @ y + self.const)

    def to_lambda(self, y):
        return np.asarray(y) / self.dual_scale

    def from_lambda(self, lam):
        return np.asarray(lam) * self.dual_scale

    def solve(self, tol=1e-13, max_iter=20000):
        """Return the minimizer ``y`` (box QP; active-set polish after projected gradient)."""
        return _box_qp(self.P, self.r, self.lower, self.upper, tol, max_iter)


def build_unified_dual(spec: ProblemSpec, param, g: Optional[ProxSpec] = None) -> DualProblem:
    """Dual problem for ``f + g`` under a parametrization.

    ``param`` is a :class:`Parametrization`, a :class:`DiagonalMetric`
    (equilibrate operator) or a positive scalar (classical step).  ``g``
    defaults to ``alpha ||.||_1``; a quadratic ``g`` is accepted too.
    Requires a positive definite ``Q`` so that ``f^*`` is finite.
    """
    if isinstance(param, Parametrization):
        tag, val = param.tag, param.value
    elif isinstance(param, DiagonalMetric):
        tag, val = "equilibrate_operator", param
    else:
        tag, val = "classical_scalar", float(param)
    A, c = spec.A, spec.c
    b = spec.b_diagonal()
    p = spec.p
    if tag == "classical_scalar":
        kappa, d_scale = 1.0 / val, np.full(p, 1.0 / val)
        D = val * A  # f~^*(-y) = kappa f^*(-D^T y)
        e = val * b
        c_t = c
    else:
        if tag == "equilibrate_operator":
            s = val.s if isinstance(val, DiagonalMetric) else np.asarray(val, dtype=float)
        elif tag == "classical_metric":
            s = val.s
        else:
            s = np.full(p, float(val))
        if s.ndim != 1:
            raise ValueError("only diagonal S is supported here")
        kappa, d_scale = 1.0, 1.0 / s
        D = s[:, None] * A
        e = s * b
        c_t = s * c
    try:
        L = np.linalg.cholesky(spec.quad_Q)
    except np.linalg.LinAlgError:
        raise ValueError("the unified dual needs a positive definite Q") from None
    W = np.linalg.solve(L, D.T)          # L^{-1} D^T
    u = np.linalg.solve(L, spec.quad_q)  # L^{-1} q
    P = kappa * W.T @ W
    r = kappa * W.T @ u + c_t
    const = kappa * 0.5 * float(u @ u)
    g = ProxSpec.l1(spec.alpha) if g is None else g
    if g.shift is not None or g.tilt is not None:
        raise ValueError("g must be an untilted l1 norm or quadratic")
    h = g.base
    if hasattr(h, "weight"):
        bound = np.broadcast_to(h.weight, (p,)) / np.abs(e)
        lower, upper = -bound, bound
    elif hasattr(h, "Q"):
        # kappa g^*(E^T y), g^*(w) = 0.5 (w - gq)^T G^{-1} (w - gq)
        Gi = np.linalg.inv(h.Q)
        EG = e[:, None] * Gi * e[None, :]
        P = P + kappa * EG
        r = r - kappa * e * (Gi @ h.q)
        const += kappa * 0.5 * float(h.q @ Gi @ h.q)
        lower, upper = np.full(p, -np.inf), np.full(p, np.inf)
    else:
        raise ValueError("g must be an l1 norm or a quadratic")
    return DualProblem(0.5 * (P + P.T), r, const, lower, upper, kappa, d_scale, tag)


def _box_qp(P, r, lower, upper, tol, max_iter):
    n = r.shape[0]
    if np.all(np.isinf(lower)) and np.all(np.isinf(upper)):
        return np.linalg.lstsq(P, -r, rcond=None)[0]
    lip = max(np.linalg.eigvalsh(P)[-1], 1e-12)
    y = np.clip(np.zeros(n), lower, upper)
    yk, tk = y.copy(), 1.0
    for it in range(max_iter):
        y_new = np.clip(yk - (P @ yk + r) / lip, lower, upper)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        yk = y_new + ((tk - 1) / t_new) * (y_new - y)
        if np.linalg.norm(y_new - y) <= tol * (1 + np.linalg.norm(y_new)) and it > 10:
            y = y_new
            break
        y, tk = y_new, t_new
    # active-set polish: fix coordinates at bounds, solve the rest exactly
    for _ in range(50):
        grad = P @ y + r
        at_lo = (y <= lower + 1e-12 * (1 + np.abs(lower))) & (grad > 0)
        at_hi = (y >= upper - 1e-12 * (1 + np.abs(upper))) & (grad < 0)
        fixed = at_lo | at_hi
        free = ~fixed
        y_new = y.copy()
        y_new[at_lo], y_new[at_hi] = lower[at_lo], upper[at_hi]
        if free.any():
            rhs = -(r[free] + P[np.ix_(free, fixed)] @ y_new[fixed])
            y_new[free] = np.linalg.lstsq(P[np.ix_(free, free)], rhs, rcond=None)[0]
        if np.all(y_new >= lower - 1e-12) and np.all(y_new <= upper + 1e-12):
            if np.allclose(y_new, y, rtol=0, atol=1e-15):
                return y_new
            y = np.clip(y_new, lower, upper)
        else:
            break
    return y
