"""scikit-learn style lasso estimator backed by the solvers in this package."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .admm import AdmmConfig, admm_classical, admm_equilibrate
from .core import ProblemSpec
from .metric_select import estimate_reference, one_shot_solve, optimal_metric

_SOLVERS = ("oneshot", "eadmm", "admm")


class EquilibrateLasso(RegressorMixin, BaseEstimator):
    """Lasso regression ``(1/2n) ||y - X w||^2 + alpha ||w||_1``.

    Parameters
    ----------
    alpha : float
        l1 weight.
    solver : {"oneshot", "eadmm", "admm"}
        ``"admm"`` runs classical ADMM with step ``gamma``.  ``"oneshot"``
        and ``"eadmm"`` first compute a reference solution, build the
        optimal diagonal metric from it and then take one solve (or run
        E-ADMM in that metric).
    gamma : float
        Step for ``solver="admm"``.
    tol, max_iter : float, int
        Stopping tolerance (KKT residual) and iteration budget.
    fit_intercept : bool
        Center ``X`` and ``y`` before fitting.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    n_iter_ : int
    residual_ : float
        Optimality residual of ``coef_`` for the centered problem.
    metric_ : ndarray or None
        Metric vector ``m`` used by the equilibrate solvers.
    """

    def __init__(self, alpha=1.0, solver="oneshot", gamma=1.0, tol=1e-8, max_iter=10000,
                 fit_intercept=True):
        self.alpha = alpha
        self.solver = solver
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.fit_intercept = fit_intercept

    def _problem(self, X, y):
        n = X.shape[0]
        Q = X.T @ X / n
        q = -X.T @ y / n
        return ProblemSpec(0.5 * (Q + Q.T), q, self.alpha)

    def fit(self, X, y):
        if self.solver not in _SOLVERS:
            raise ValueError(f"solver must be one of {_SOLVERS}, got {self.solver!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        X, y = validate_data(self, X, y, y_numeric=True, dtype=np.float64)
        if self.fit_intercept:
            x_mean, y_mean = X.mean(axis=0), y.mean()
            Xc, yc = X - x_mean, y - y_mean
        else:
            x_mean, y_mean = np.zeros(X.shape[1]), 0.0
            Xc, yc = X, y
        spec = self._problem(Xc, yc)
        cfg = AdmmConfig(k_max=self.max_iter, tol=self.tol, record_trace=False)
        self.metric_ = None
        if self.solver == "admm":
            sol, _ = admm_classical(spec, self.gamma, cfg=cfg)
        else:
            ref = estimate_reference(spec)
            if self.solver == "oneshot":
                choice = optimal_metric(ref.z_star, ref.lambda_star)
                sol = one_shot_solve(spec, choice)
            else:
                choice = optimal_metric(ref.z_star, ref.lambda_star, eps_floor=1e-12)
                sol, _ = admm_equilibrate(spec, choice.to_metric(), cfg=cfg)
            self.metric_ = choice.m.copy()
        self.coef_ = np.array(sol.x_star)
        self.intercept_ = float(y_mean - x_mean @ self.coef_) if self.fit_intercept else 0.0
        self.n_iter_ = int(sol.iterations)
        self.residual_ = float(sol.residual)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

