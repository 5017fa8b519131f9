"""Optimal diagonal metric for l1 problems and the one-iteration solve.

For ``f(x) + alpha ||F x||_1`` with solution ``x*`` and multiplier
``lambda*`` the metric ``m_i = |(F x*)_i / lambda*_i|`` makes the first
E-ADMM x-update from zero land on ``x*``:

    (Q + F^T M F) x = -q,   M = diag(1/m).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve, null_space
from scipy.optimize import lsq_linear

from .core import EPS_FLOOR, DiagonalMetric, ProblemSpec, SolutionPair

RATIO = "ratio"
CLAMPED_ZERO = "clamped_zero"
CLAMPED_INF = "clamped_inf"
BOTH_ZERO = "both_zero_default"


@dataclass(frozen=True)
class MetricChoice:
    """Metric vector ``m`` with per-entry provenance and its selection objective."""

    m: np.ndarray
    provenance: tuple
    objective_value: float
    eps_floor: float = EPS_FLOOR

    def to_metric(self) -> DiagonalMetric:
        flags = tuple(
            "zero" if p == CLAMPED_ZERO else "inf" if p == CLAMPED_INF else ""
            for p in self.provenance
        )
        return DiagonalMetric(self.m, eps_floor=self.eps_floor, clamped=flags)

    def as_rows(self):
        """``(index, m_i, provenance_i)`` rows for report files."""
        return [(i, float(v), p) for i, (v, p) in enumerate(zip(self.m, self.provenance))]


def _s_vector(S):
    if isinstance(S, DiagonalMetric):
        return S.s
    return np.asarray(S, dtype=float)


def selection_objective(S, x_star, lambda_star, zeta0):
    """``||S a||^2 + ||lambda / s||^2 - 2 <S a, zeta0> - 2 <lambda / s, zeta0>``.

    ``x_star`` is the already-mapped primal point ``a = A x*`` (or ``F x*``)
    and ``S`` is a :class:`DiagonalMetric` or the diagonal ``s``.
    """
    s = _s_vector(S)
    sa = s * np.asarray(x_star, dtype=float)
    sl = np.asarray(lambda_star, dtype=float) / s
    z0 = np.asarray(zeta0, dtype=float)
    return float(sa @ sa + sl @ sl - 2.0 * sa @ z0 - 2.0 * sl @ z0)


def optimal_metric(x_ref, lambda_ref, eps_floor=EPS_FLOOR) -> MetricChoice:
    """Entrywise minimizer of ``|x_i|^2 / m_i + m_i |lambda_i|^2``.

    ``x_ref`` lives in the ``F x`` space.  Ratio entries get
    ``|x_i / lambda_i|``; ``x_i = 0`` sends ``m_i`` to ``eps_floor``,
    ``lambda_i = 0`` to ``1 / eps_floor`` and both zero to 1.
    """
    x = np.atleast_1d(np.asarray(x_ref, dtype=float))
    lam = np.atleast_1d(np.asarray(lambda_ref, dtype=float))
    if x.shape != lam.shape:
        raise ValueError(f"x_ref has shape {x.shape} but lambda_ref has {lam.shape}")
    ceiling = 1.0 / eps_floor
    m = np.ones_like(x)
    prov = []
    for i, (xi, li) in enumerate(zip(x, lam)):
        if xi != 0 and li != 0:
            m[i] = min(max(abs(xi / li), eps_floor), ceiling)
            prov.append(RATIO)
        elif li != 0:
            m[i] = eps_floor
            prov.append(CLAMPED_ZERO)
        elif xi != 0:
            m[i] = ceiling
            prov.append(CLAMPED_INF)
        else:
            prov.append(BOTH_ZERO)
    value = selection_objective(1.0 / np.sqrt(m), x, lam, np.zeros_like(x))
    return MetricChoice(m, tuple(prov), value, eps_floor)


def _kkt_tol(spec):
    return 1e-6 * (1.0 + np.linalg.norm(spec.quad_q))


def _multiplier(spec, x):
    # lambda with grad f(x) + F^T lambda = 0 (least squares for rectangular F)
    g = spec.grad_f(x)
    F = spec.F
    if F.shape[0] == F.shape[1]:
        return np.linalg.solve(F.T, -g)
    return np.linalg.lstsq(F.T, -g, rcond=None)[0]


def one_shot_solve(spec: ProblemSpec, M, restricted=True, tol=None) -> SolutionPair:
    """``x = argmin f(x) + 0.5 ||F x||_M^2``, i.e. ``(Q + F^T M F) x = -q``.

    ``M`` is a :class:`DiagonalMetric` or a :class:`MetricChoice`.  With
    ``restricted=True`` the rows whose ``m_i`` sits at the floor (the
    ``m_i -> 0`` limit) are imposed exactly as ``(F x)_i = 0`` instead of
    through a 1/eps_floor penalty.
    """
    if not spec.is_l1_composite():
        raise ValueError("one_shot_solve needs an l1-composite problem (A = F, B = I, c = 0)")
    if isinstance(M, MetricChoice):
        M = M.to_metric()
    F, Q, q = spec.F, spec.quad_Q, spec.quad_q
    if M.size != F.shape[0]:
        raise ValueError(f"metric has size {M.size} but F has {F.shape[0]} rows")
    pinned = M.at_floor() if restricted else np.zeros(M.size, dtype=bool)
    keep = ~pinned
    Fk = F[keep]
    H = Q + Fk.T @ (M.M[keep][:, None] * Fk)
    if pinned.any():
        N = null_space(F[pinned])
        if N.shape[1] == 0:
            x = np.zeros(spec.n)
        else:
            x = N @ _spd_solve(N.T @ H @ N, -(N.T @ q))
    else:
        x = _spd_solve(H, -q)
    lam = _multiplier(spec, x)
    tol = _kkt_tol(spec) if tol is None else tol
    return SolutionPair(x, lam, spec.objective(x), optimality_residual(spec, x), tol=tol,
                        z_star=F @ x, iterations=1)


def _spd_solve(H, b):
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("one-shot system is singular; check Q, F and the metric") from None
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


def optimality_residual(spec: ProblemSpec, x, zero_tol=None) -> float:
    """Distance of ``-grad f(x)`` from ``alpha F^T d||F x||_1``.

    Entries with ``|(F x)_i| <= zero_tol`` count as zero.  The default
    ``1e-9 ||F x||_inf + eps_floor (1 + alpha)`` covers the footprint of a
    floor-clamped metric entry, which leaves ``|(F x)_i|`` near
    ``eps_floor |lambda_i| <= eps_floor alpha``.  For square ``F`` the residual is measured
    in the ``F x`` coordinates through ``F^{-T} grad f``; for rectangular
    ``F`` it is the box-constrained least-squares distance in ``x`` space.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = spec.grad_f(x)
    F, alpha = spec.F, spec.alpha
    u = F @ x
    if F.shape[0] == F.shape[1]:
        return _square_residual(np.linalg.solve(F.T, g), u, alpha, zero_tol)
    zero = np.abs(u) <= _zero_tol(u, zero_tol, alpha)
    # min_w || g + F^T w ||  with w_i = alpha sgn(u_i) on the support, |w_i| <= alpha off it
    fixed = alpha * np.sign(u) * ~zero
    base = g + F.T @ fixed
    if not zero.any():
        return float(np.linalg.norm(base))
    Fz = F[zero].T
    res = lsq_linear(Fz, -base, bounds=(-alpha, alpha), tol=1e-14, method="bvls")
    return float(np.linalg.norm(base + Fz @ res.x))


def _zero_tol(u, zero_tol, alpha):
    if zero_tol is None:
        return 1e-9 * np.max(np.abs(u), initial=0.0) + EPS_FLOOR * (1.0 + alpha)
    return zero_tol


def _square_residual(gh, u, alpha, zero_tol=None):
    # gh = F^{-T} grad f(x), u = F x
    zero = np.abs(u) <= _zero_tol(u, zero_tol, alpha)
    on = gh[~zero] + alpha * np.sign(u[~zero])
    off = np.maximum(np.abs(gh[zero]) - alpha, 0.0)
    return float(np.sqrt(on @ on + off @ off))


def residual_function(spec: ProblemSpec):
    """``x -> optimality_residual(spec, x)`` with ``F^{-T}`` factored once."""
    F = spec.F
    if F.shape[0] != F.shape[1]:
        return lambda x: optimality_residual(spec, x)
    if not np.any(F - np.diag(np.diag(F))):
        d = np.diag(F).copy()
        return lambda x: _square_residual(spec.grad_f(x) / d, d * x, spec.alpha)
    lu = lu_factor(F.T)
    return lambda x: _square_residual(lu_solve(lu, spec.grad_f(x)), F @ x, spec.alpha)


class ReferenceSolveError(RuntimeError):
    """The baseline reference solve did not converge."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def estimate_reference(spec: ProblemSpec, tol=1e-10, k_max=100000, check=True) -> SolutionPair:
    """High-accuracy ``(x*, lambda*)`` from classical ADMM with ``gamma = 1``.

    The returned ``z_star`` is the exactly sparse splitting variable, which
    is what :func:`optimal_metric` should receive as ``F x*``.
    """
    from .admm import AdmmConfig, admm_classical

    cfg = AdmmConfig(k_max=k_max, tol=tol, record_trace=False, stop="primal_dual")
    sol, _ = admm_classical(spec, 1.0, cfg=cfg)
    if not sol.converged:
        raise ReferenceSolveError(
            f"reference solve stopped at residual {sol.residual:.3e} after {sol.iterations} iterations",
            sol.residual,
        )
    if check:
        # B^T lambda must lie in alpha * d||z||_1
        w, z, a = spec.b_diagonal() * sol.lambda_star, sol.z_star, spec.alpha
        slack = 1e-8 * (1.0 + a)
        bad = np.abs(w) > a + slack
        bad |= (z != 0) & (np.abs(w - a * np.sign(z)) > slack)
        if bad.any():
            raise ReferenceSolveError("recovered multiplier is not in alpha * subdifferential", sol.residual)
    return sol


def clamp_sensitivity(spec: ProblemSpec, choice: MetricChoice):
    """``||x_clamped - x_restricted||`` for the two ways of handling floor entries."""
    a = one_shot_solve(spec, choice, restricted=True).x_star
    b = one_shot_solve(spec, choice, restricted=False).x_star
    return float(np.linalg.norm(a - b))
