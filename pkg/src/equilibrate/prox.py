"""Proximal operators in the classical and the equilibrate parametrization.

Every supported function is stored in the canonical form

    f(z) = h(z - a) - <t, z> + k

where ``h`` is a convex quadratic, a weighted l1 norm, or the indicator of
a box ``{|z_i| <= b_i}``.  The family is closed under conjugation, so the
conjugate of any member has a closed-form prox as well (quadratics need a
positive definite Hessian for that).

The equilibrate prox with a linear map ``S`` is

    Prox_{f S^{-1}}(v) = S zhat,   zhat = argmin f(z) + 0.5 ||S z - v||^2

and ``S`` may be a nonzero scalar, a vector (diagonal map), a matrix with
full column rank, or a :class:`~equilibrate.core.DiagonalMetric`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DiagonalMetric, Parametrization, full_column_rank


class UnsupportedFunctionError(ValueError):
    """The requested prox has no closed form for this function/map pair."""


@dataclass(frozen=True)
class _Quadratic:
    Q: np.ndarray
    q: np.ndarray

    def value(self, w):
        return 0.5 * w @ self.Q @ w + self.q @ w


@dataclass(frozen=True)
class _L1:
    weight: np.ndarray  # broadcastable against z

    def value(self, w):
        return float(np.sum(self.weight * np.abs(w)))


@dataclass(frozen=True)
class _Box:
    bound: np.ndarray

    def value(self, w, tol=1e-12):
        excess = np.abs(w) - self.bound
        return 0.0 if np.all(excess <= tol * (1.0 + self.bound)) else np.inf


class ProxSpec:
    """A proximable function together with an optional parametrization tag."""

    __slots__ = ("kind", "base", "shift", "tilt", "const", "param")

    def __init__(self, kind, base, shift=None, tilt=None, const=0.0, param=None):
        self.kind = kind
        self.base = base
        self.shift = shift
        self.tilt = tilt
        self.const = float(const)
        self.param: Optional[Parametrization] = param

    def __repr__(self):
        return f"ProxSpec(kind={self.kind!r}, base={type(self.base).__name__[1:].lower()})"

    def with_param(self, param):
        return ProxSpec(self.kind, self.base, self.shift, self.tilt, self.const, param)

    # --- constructors -------------------------------------------------
    @classmethod
    def quadratic(cls, Q, q=None, param=None):
        """``f(z) = 0.5 z^T Q z + q^T z``; ``Q`` must be symmetric PSD."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12 * max(1.0, np.abs(Q).max(initial=0.0)):
            raise ValueError("Q must be symmetric")
        Q = 0.5 * (Q + Q.T)
        if Q.size and np.linalg.eigvalsh(Q)[0] < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        q = np.zeros(Q.shape[0]) if q is None else np.atleast_1d(np.asarray(q, dtype=float))
        return cls("quadratic", _Quadratic(Q, q), param=param)

    @classmethod
    def l1(cls, alpha=1.0, param=None):
        """``f(z) = sum_i alpha_i |z_i|`` (``alpha`` scalar or per-entry, nonnegative)."""
        w = np.asarray(alpha, dtype=float)
        if np.any(w < 0):
            raise ValueError("l1 weight must be nonnegative")
        return cls("l1", _L1(w), param=param)

    @classmethod
    def box(cls, bound=1.0, param=None):
        """Indicator of ``{z : |z_i| <= bound_i}``, the conjugate of the l1 norm."""
        b = np.asarray(bound, dtype=float)
        if np.any(b < 0):
            raise ValueError("box bound must be nonnegative")
        return cls("box", _Box(b), param=param)

    @classmethod
    def linear_tilt(cls, base, c, param=None):
        """``z -> base(z) - <c, z>``."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        tilt = c if base.tilt is None else base.tilt + c
        return cls("linear_tilt", base.base, base.shift, tilt, base.const,
                   param if param is not None else base.param)

    @classmethod
    def shifted(cls, base, a):
        """``z -> base(z - a)``."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        shift = a if base.shift is None else base.shift + a
        const = base.const
        if base.tilt is not None:
            const += float(base.tilt @ a)
        return cls("shifted", base.base, shift, base.tilt, const, base.param)

    @classmethod
    def conjugate(cls, base, param=None):
        """Fenchel conjugate of ``base`` in closed form."""
        h = base.base
        if isinstance(h, _Quadratic):
            try:
                L = np.linalg.cholesky(h.Q)
            except np.linalg.LinAlgError:
                raise UnsupportedFunctionError(
                    "conjugate of a quadratic needs a positive definite Q"
                ) from None
            Qi = np.linalg.inv(h.Q)
            Qi = 0.5 * (Qi + Qi.T)
            y = np.linalg.solve(L, h.q)
            new_h, h_const = _Quadratic(Qi, -(Qi @ h.q)), 0.5 * float(y @ y)
        elif isinstance(h, _L1):
            new_h, h_const = _Box(h.weight), 0.0
        elif isinstance(h, _Box):
            new_h, h_const = _L1(h.bound), 0.0
        else:  # pragma: no cover
            raise UnsupportedFunctionError(f"no conjugate for {type(h).__name__}")
        # (h(. - a) - <t, .> + k)^* = h^*(. + t) + <a, .> + <t, a> - k
        a, t = base.shift, base.tilt
        const = h_const - base.const
        if a is not None and t is not None:
            const += float(t @ a)
        new_shift = None if t is None else -t
        new_tilt = None if a is None else -a
        return cls("conjugate", new_h, new_shift, new_tilt, const,
                   param if param is not None else base.param)

    # --- evaluation ---------------------------------------------------
    def __call__(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        w = z if self.shift is None else z - self.shift
        val = self.base.value(w) + self.const
        if self.tilt is not None:
            val -= float(self.tilt @ z)
        return float(val)

    evaluate = __call__

    def conj(self):
        return ProxSpec.conjugate(self)


def _as_map(S):
    """Normalize a linear-map argument to ('diag', vector) or ('dense', matrix)."""
    if isinstance(S, Parametrization):
        if S.tag == "classical_scalar":
            raise ValueError("classical parametrization is not a linear map; use prox_classical")
        S = S.value
    if isinstance(S, DiagonalMetric):
        return "diag", S.s
    S = np.asarray(S, dtype=float)
    if S.ndim == 0:
        if S == 0:
            raise ValueError("equilibrate scalar must be nonzero")
        return "scalar", float(S)
    if S.ndim == 1:
        if np.any(S == 0):
            raise ValueError("diagonal map must have nonzero entries")
        return "diag", S
    if S.shape[0] == S.shape[1] and not np.any(S - np.diag(np.diag(S))):
        return _as_map(np.diag(S).copy())
    if not full_column_rank(S):
        raise ValueError("linear map S must have full column rank")
    return "dense", S


def _apply(kind, S, z):
    if kind == "dense":
        return S @ z
    return S * z


def _argmin(f: ProxSpec, kind, S, v):
    """Minimizer of ``f(z) + 0.5 ||S z - v||^2``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    u = v
    if f.shift is not None:
        u = u - _apply(kind, S, f.shift)
    if f.tilt is not None:
        # -<t, w> folds into the square: t = S^T r with r = S (S^T S)^{-1} t
        if kind == "dense":
            r = S @ np.linalg.solve(S.T @ S, f.tilt)
        else:
            r = f.tilt / S
        u = u + r
    h = f.base
    if isinstance(h, _Quadratic):
        if kind == "dense":
            w = np.linalg.solve(h.Q + S.T @ S, S.T @ u - h.q)
        else:
            sv = np.broadcast_to(S, u.shape)
            w = np.linalg.solve(h.Q + np.diag(sv * sv), sv * u - h.q)
    elif kind == "dense":
        raise UnsupportedFunctionError(
            f"{type(h).__name__[1:]} prox is only separable for diagonal maps"
        )
    elif isinstance(h, _L1):
        w = _soft(u / S, h.weight / (S * S))
    else:
        w = np.clip(u / S, -h.bound, h.bound)
    return w if f.shift is None else w + f.shift


def _soft(u, level):
    return np.sign(u) * np.maximum(np.abs(u) - level, 0.0)


def soft_threshold(u):
    """Componentwise ``sgn(u) * max(|u| - 1, 0)``."""
    return _soft(np.asarray(u, dtype=float), 1.0)


def prox_classical(f: ProxSpec, gamma, v):
    """``argmin (1/gamma) f(z) + 0.5 ||z - v||^2``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    r = np.sqrt(gamma)
    return _argmin(f, "scalar", r, r * np.atleast_1d(np.asarray(v, dtype=float)))


def prox_classical_metric(f: ProxSpec, metric: DiagonalMetric, v):
    """``argmin f(z) + 0.5 ||z - v||_M^2`` for a diagonal metric ``M``."""
    s = metric.s
    return _argmin(f, "diag", s, s * np.atleast_1d(np.asarray(v, dtype=float)))


def prox_equilibrate(f: ProxSpec, S, v):
    """Equilibrate prox ``S argmin_z f(z) + 0.5 ||S z - v||^2``."""
    kind, Sm = _as_map(S)
    return _apply(kind, Sm, _argmin(f, kind, Sm, v))


def prox(f: ProxSpec, v, param: Optional[Parametrization] = None):
    """Dispatch on the parametrization tag (``param`` or ``f.param``)."""
    param = param if param is not None else f.param
    if param is None:
        raise ValueError("no parametrization given")
    if param.tag == "classical_scalar":
        return prox_classical(f, param.value, v)
    if param.tag == "classical_metric":
        return prox_classical_metric(f, param.value, v)
    return prox_equilibrate(f, param.value, v)


def metric_prox_l1(v, M):
    """``argmin ||x||_1 + 0.5 ||x - v||_M^2`` as ``m * T(v / m)``.

    ``M`` is a :class:`DiagonalMetric` or the vector ``m`` (``M^{-1} = diag(m)``).
    """
    if isinstance(M, DiagonalMetric):
        m = M.m
    else:
        m = np.asarray(M, dtype=float)
        if m.ndim == 2:
            if np.any(m - np.diag(np.diag(m))):
                raise UnsupportedFunctionError("metric soft-thresholding needs a diagonal metric")
            m = 1.0 / np.diag(m)
    v = np.asarray(v, dtype=float)
    return m * soft_threshold(v / m)


def _dual_map(kind, S):
    """``(S^*)^{-1}`` for a bijective map."""
    if kind == "dense":
        if S.shape[0] != S.shape[1]:
            return None
        return np.linalg.inv(S).T
    return 1.0 / S


def moreau_decompose(f: ProxSpec, S, v, check=False, tol=1e-10):
    """Split ``v`` into ``Prox_{f S^-1}(v) + Prox_{f^* S^*}(v)``.

    The dual part is ``(S^*)^{-1} yhat`` with
    ``yhat = argmin f^*(y) + 0.5 ||(S^*)^{-1} y - v||^2``.  When the
    conjugate has no closed form (or ``S`` is not square) the dual part
    falls back to ``v - p``.  ``check=True`` computes both paths and
    raises if they disagree by more than ``tol``.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    kind, Sm = _as_map(S)
    p = _apply(kind, Sm, _argmin(f, kind, Sm, v))
    inv_adj = _dual_map(kind, Sm)
    d = None
    if inv_adj is not None:
        try:
            fc = ProxSpec.conjugate(f)
            d = _apply(kind, inv_adj, _argmin(fc, kind, inv_adj, v))
        except UnsupportedFunctionError:
            d = None
    if d is None:
        return p, v - p
    if check:
        dev = np.max(np.abs(p + d - v), initial=0.0)
        if dev > tol * (1.0 + np.max(np.abs(v), initial=0.0)):
            raise ArithmeticError(f"Moreau decomposition mismatch {dev:.3e}")
    return p, d


def translate_parametrization(f: ProxSpec, M: DiagonalMetric, v, direction):
    """Move between the equilibrate prox and the classical metric prox.

    ``remove_scaling`` computes ``Prox_{f S^-1}(v)`` as
    ``S Prox_f^{M^-1}(S^-1 v)``; ``equip_scaling`` computes
    ``Prox_f^{M^-1}(v)`` as ``S^-1 Prox_{f S^-1}(S v)``.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    s = M.s
    if direction == "remove_scaling":
        return s * prox_classical_metric(f, M, v / s)
    if direction == "equip_scaling":
        return prox_equilibrate(f, s, s * v) / s
    raise ValueError("direction must be 'remove_scaling' or 'equip_scaling'")


def tilt_prox(f: ProxSpec, c, S, v):
    """Prox of ``z1 -> f(S^-1 z1) - <c, z1>``, which is ``Prox_{f S^-1}(c + v)``."""
    return prox_equilibrate(f, S, np.asarray(c, dtype=float) + np.asarray(v, dtype=float))
