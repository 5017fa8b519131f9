"""Seeded random problem families at desk scale."""

from __future__ import annotations

import numpy as np

from .core import ProblemSpec

MAX_DIM = 500
FAMILIES = ("lasso_dense", "lasso_diagonal", "quadratic_pair")
DELTA = 1e-3


def _check_dims(n, p):
    if n < 1 or p < 1:
        raise ValueError("dimensions must be positive")
    if n > MAX_DIM or p > MAX_DIM:
        raise ValueError(f"desk-scale cap: n and p must be <= {MAX_DIM}, got n={n}, p={p}")


def _lasso_data(rng, n, rows=None):
    rows = 2 * n if rows is None else rows
    G = rng.standard_normal((rows, n)) / np.sqrt(n)
    Q = G.T @ G + DELTA * np.eye(n)
    x_true = rng.standard_normal(n) * (rng.random(n) < 0.4)
    b = G @ x_true + 0.1 * rng.standard_normal(rows)
    q = -G.T @ b
    return 0.5 * (Q + Q.T), q


def random_lasso(rng, n, diagonal_F=False):
    """``0.5 x^T Q x + q^T x + alpha ||F x||_1`` with ``Q = G^T G + 1e-3 I``.

    ``G`` has ``2n`` standard normal rows scaled by ``1/sqrt(n)``.  ``F`` is
    the identity, or a random diagonal with entries in ``[0.5, 2]``.
    """
    _check_dims(n, n)
    Q, q = _lasso_data(rng, n)
    F = np.diag(rng.uniform(0.5, 2.0, n)) if diagonal_F else np.eye(n)
    alpha = 0.3 * np.max(np.abs(np.linalg.solve(F.T, q)))
    return ProblemSpec(Q, q, alpha, F=F)


def random_quadratic_pair(rng, n):
    """General constraint ``A x - B z = c`` with square dense ``A``, diagonal ``B``, ``c != 0``."""
    _check_dims(n, n)
    Q, q = _lasso_data(rng, n)
    A = np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n)
    B = np.diag(rng.uniform(0.5, 2.0, n))
    c = 0.5 * rng.standard_normal(n)
    alpha = 0.3 * np.max(np.abs(q))
    return ProblemSpec(Q, q, alpha, F=A, A=A, B=B, c=c)


def generate(family, n, count, seed, p=None):
    """List of ``count`` reproducible :class:`ProblemSpec` instances."""
    p = n if p is None else p
    _check_dims(n, p)
    if p != n:
        raise ValueError("these families use p = n (square F / A)")
    rng = np.random.default_rng(seed)
    if family == "lasso_dense":
        return [random_lasso(rng, n) for _ in range(count)]
    if family == "lasso_diagonal":
        return [random_lasso(rng, n, diagonal_F=True) for _ in range(count)]
    if family == "quadratic_pair":
        return [random_quadratic_pair(rng, n) for _ in range(count)]
    raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
