"""Seeded identity battery behind the ``verify`` command.

Each check draws random instances, measures the deviation from the
identity it exercises and compares it with a fixed tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admm import (
    AdmmConfig,
    admm_equilibrate,
    admm_fixed_point_map,
    classical_duality_traces,
    reference_zeta,
    self_duality_check,
)
from .core import DiagonalMetric
from .fixedpoint import check_monotone, check_parallel_scaling, verify_rate
from .instances import random_lasso
from .metric_select import estimate_reference, one_shot_solve, optimal_metric
from .prox import (
    ProxSpec,
    moreau_decompose,
    prox_classical,
    prox_classical_metric,
    prox_equilibrate,
    tilt_prox,
    translate_parametrization,
)


@dataclass(frozen=True)
class CheckResult:
    check: str
    instance: str
    tag: str
    deviation: float
    tolerance: float
    iterations: object = ""
    residual: object = ""

    @property
    def passed(self):
        return bool(self.deviation <= self.tolerance)


def random_prox_spec(rng, n, kinds=("quadratic", "l1", "box")):
    """A random closed-form function on ``R^n`` (possibly shifted and tilted)."""
    kind = kinds[rng.integers(len(kinds))]
    if kind == "quadratic":
        G = rng.standard_normal((n, n))
        f = ProxSpec.quadratic(G.T @ G / n + 0.1 * np.eye(n), rng.standard_normal(n))
    elif kind == "l1":
        f = ProxSpec.l1(rng.uniform(0.1, 2.0, n))
    else:
        f = ProxSpec.box(rng.uniform(0.1, 2.0, n))
    if rng.random() < 0.5:
        f = ProxSpec.linear_tilt(f, rng.standard_normal(n))
    if rng.random() < 0.5:
        f = ProxSpec.shifted(f, rng.standard_normal(n))
    return f


def _diag_map(rng, n, signed=True):
    s = rng.uniform(0.2, 3.0, n)
    if signed:
        s *= rng.choice([-1.0, 1.0], n)
    return s


def check_moreau(rng, draws=200):
    dev = 0.0
    for _ in range(draws):
        n = int(rng.integers(1, 6))
        f = random_prox_spec(rng, n)
        s = _diag_map(rng, n)
        v = 3.0 * rng.standard_normal(n)
        p, d = moreau_decompose(f, s, v)
        dev = max(dev, float(np.max(np.abs(p + d - v))))
    return CheckResult("moreau", f"draws={draws}", "equilibrate_operator", dev, 1e-10)


def check_translation(rng, draws=200):
    dev = 0.0
    for _ in range(draws):
        n = int(rng.integers(1, 6))
        f = random_prox_spec(rng, n)
        metric = DiagonalMetric(rng.uniform(0.1, 10.0, n))
        s = metric.s
        v = 3.0 * rng.standard_normal(n)
        a = translate_parametrization(f, metric, v, "remove_scaling")
        b = translate_parametrization(f, metric, v, "equip_scaling")
        dev = max(
            dev,
            float(np.max(np.abs(a - prox_equilibrate(f, s, v)))),
            float(np.max(np.abs(b - prox_classical_metric(f, metric, v)))),
            float(np.max(np.abs(a / s - translate_parametrization(f, metric, v / s, "equip_scaling")))),
        )
    return CheckResult("translation", f"draws={draws}", "classical_metric", dev, 1e-10)


def check_tilt(rng, draws=200):
    dev = 0.0
    for _ in range(draws):
        n = int(rng.integers(1, 6))
        f = random_prox_spec(rng, n)
        s = _diag_map(rng, n)
        c, v = rng.standard_normal(n), rng.standard_normal(n)
        # f(S^-1 z1) - <c, z1> in the original variable is f(z) - <S c, z>
        direct = prox_equilibrate(ProxSpec.linear_tilt(f, s * c), s, v)
        dev = max(dev, float(np.max(np.abs(tilt_prox(f, c, s, v) - direct))))
    return CheckResult("tilt", f"draws={draws}", "equilibrate_operator", dev, 1e-10)


def check_resolvent_complement(rng, draws=200):
    dev = 0.0
    for _ in range(draws):
        n = int(rng.integers(1, 6))
        f = random_prox_spec(rng, n)
        v = 3.0 * rng.standard_normal(n)
        total = prox_classical(f, 1.0, v) + prox_classical(f.conj(), 1.0, v)
        dev = max(dev, float(np.max(np.abs(total - v))))
    return CheckResult("resolvent_complement", f"draws={draws}", "classical_scalar", dev, 1e-10)


def check_firm_nonexpansive(rng, instances=5, pairs=200):
    worst = -np.inf
    for _ in range(instances):
        n = int(rng.integers(1, 6))
        f = random_prox_spec(rng, n)
        s = _diag_map(rng, n)
        for _ in range(pairs):
            x, y = 3.0 * rng.standard_normal(n), 3.0 * rng.standard_normal(n)
            tx, ty = prox_equilibrate(f, s, x), prox_equilibrate(f, s, y)
            d = tx - ty
            worst = max(worst, float(d @ d - (x - y) @ d))
    return CheckResult("firm_nonexpansive", f"pairs={instances * pairs}",
                       "equilibrate_operator", max(worst, 0.0), 1e-10)


def check_self_duality(rng, instances=3, n=5):
    out = []
    for i in range(instances):
        spec = random_lasso(rng, n, diagonal_F=bool(i % 2))
        M = DiagonalMetric(rng.uniform(0.1, 10.0, n))
        rep = self_duality_check(spec, M, k=40)
        out.append(CheckResult("self_duality", f"lasso{i}", "equilibrate_operator",
                               rep.max_deviation, 1e-8, rep.iterations))
    return out


def check_hidden_scaling(rng, gammas=(0.5, 2.0, 10.0), n=5):
    out = []
    spec = random_lasso(rng, n)
    for g in gammas:
        tp, td = classical_duality_traces(spec, g, k=40)
        rep = check_parallel_scaling(td, tp, np.sqrt(g))
        out.append(CheckResult("parallel_scaling", f"lasso_gamma={g:g}", "classical_scalar",
                               rep.max_deviation, 1e-8 * (1 + rep.scale), len(tp.points) - 1))
    return out


def _eadmm_trace(spec, M, k_max=3000):
    cfg = AdmmConfig(k_max=k_max, tol=1e-13, stop="fixed_point")
    return admm_equilibrate(spec, M, cfg=cfg)


def check_rate_and_fixed_point(rng, instances=3, n=8):
    out = []
    for i in range(instances):
        spec = random_lasso(rng, n, diagonal_F=bool(i % 2))
        M = DiagonalMetric(rng.uniform(0.1, 10.0, n))
        ref = estimate_reference(spec)
        sol, tr = _eadmm_trace(spec, M)
        zstar = reference_zeta(spec, M, ref.x_star, ref.lambda_star, ref.z_star)
        tr.set_reference(zstar)
        rate = verify_rate(tr, tr.dist0_sq())
        mono = check_monotone(tr)
        ratio_dev = max(rate.worst_ratio - 1.0, 0.0) + (0.0 if mono.passed else np.inf)
        out.append(CheckResult("rate_bound", f"lasso{i}", "equilibrate_operator", ratio_dev,
                               1e-9, sol.iterations, sol.residual))
        fmap = admm_fixed_point_map(spec, M)
        dev = max(float(np.linalg.norm(fmap(a) - b)) for a, b in zip(tr.points[:-1], tr.points[1:]))
        out.append(CheckResult("fixed_point_map", f"lasso{i}", "equilibrate_operator", dev, 1e-10,
                               sol.iterations, sol.residual))
        fix = float(np.linalg.norm(fmap(zstar) - zstar))
        out.append(CheckResult("fixed_point_invariance", f"lasso{i}", "equilibrate_operator",
                               fix, 1e-9))
    return out


def check_one_iteration(rng, instances=3, n=10):
    out = []
    for i in range(instances):
        spec = random_lasso(rng, n, diagonal_F=bool(i % 2))
        ref = estimate_reference(spec)
        choice = optimal_metric(ref.z_star, ref.lambda_star)
        sol = one_shot_solve(spec, choice)
        dev = float(np.linalg.norm(sol.x_star - ref.x_star)) / (1 + np.linalg.norm(ref.x_star))
        out.append(CheckResult("one_iteration", f"lasso{i}", "equilibrate_operator", dev, 1e-6,
                               1, sol.residual))
    return out


def run_battery(seed=0):
    """Run every check with a generator seeded by ``seed``."""
    rng = np.random.default_rng(seed)
    rows = [
        check_moreau(rng),
        check_translation(rng),
        check_tilt(rng),
        check_resolvent_complement(rng),
        check_firm_nonexpansive(rng),
    ]
    rows += check_self_duality(rng)
    rows += check_hidden_scaling(rng)
    rows += check_rate_and_fixed_point(rng)
    rows += check_one_iteration(rng)
    return rows
