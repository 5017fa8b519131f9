"""The nine acceptance criteria, one test each, at the stated tolerances."""

import time

import numpy as np
import pytest

from equilibrate.admm import (
    AdmmConfig,
    admm_classical,
    admm_equilibrate,
    admm_fixed_point_map,
    classical_duality_traces,
    reference_zeta,
    self_duality_check,
)
from equilibrate.battery import random_prox_spec
from equilibrate.cli import DEFAULT_GAMMA_GRID, compare_instance
from equilibrate.core import DiagonalMetric, ProblemSpec
from equilibrate.fixedpoint import check_monotone, check_parallel_scaling, verify_rate
from equilibrate.instances import generate, random_lasso, random_quadratic_pair
from equilibrate.metric_select import (
    estimate_reference,
    one_shot_solve,
    optimal_metric,
    optimality_residual,
)
from equilibrate.prox import ProxSpec, metric_prox_l1, moreau_decompose

from conftest import golden_section

pytestmark = pytest.mark.acceptance


def _fixed(k_max, tol=1e-13):
    return AdmmConfig(k_max=k_max, tol=tol, stop="fixed_point")


def test_c1_one_iteration_convergence(report_criterion):
    rng = np.random.default_rng(101)
    sizes = (1, 5, 20, 50)
    t0 = time.perf_counter()
    worst_x, worst_r = 0.0, 0.0
    for i in range(100):
        spec = random_lasso(rng, sizes[i % 4], diagonal_F=bool((i // 4) % 2))
        ref = estimate_reference(spec)
        sol = one_shot_solve(spec, optimal_metric(ref.z_star, ref.lambda_star))
        dx = np.linalg.norm(sol.x_star - ref.x_star) / (1e-6 * (1 + np.linalg.norm(ref.x_star)))
        dr = optimality_residual(spec, sol.x_star) / (1e-6 * (1 + np.linalg.norm(spec.quad_q)))
        worst_x, worst_r = max(worst_x, dx), max(worst_r, dr)
    elapsed = time.perf_counter() - t0
    ok = worst_x <= 1 and worst_r <= 1 and elapsed <= 60
    report_criterion(1, ok, f"100 instances, worst |x1-x*|/tol={worst_x:.2e}, "
                            f"worst residual/tol={worst_r:.2e}, {elapsed:.1f}s")
    assert ok


def test_c2_moreau_identity(report_criterion):
    rng = np.random.default_rng(202)
    dev = 0.0
    for i in range(1000):
        n = int(rng.integers(1, 6))
        if i % 5 == 0:
            # dense bijective S needs a conjugate with a dense-map prox (quadratic family)
            f = random_prox_spec(rng, n, kinds=("quadratic",))
            S = rng.standard_normal((n, n)) + 3 * np.eye(n)
        else:
            f = random_prox_spec(rng, n)
            S = rng.uniform(0.1, 5, n) * rng.choice([-1.0, 1.0], n)
        v = 5 * rng.standard_normal(n)
        p, d = moreau_decompose(f, S, v)
        dev = max(dev, float(np.max(np.abs(p + d - v))))
    ok = dev <= 1e-10
    report_criterion(2, ok, f"1000 draws, max |p+d-v|={dev:.2e}")
    assert ok


def test_c3_metric_soft_threshold(report_criterion):
    rng = np.random.default_rng(303)
    dev = 0.0
    for _ in range(1000):
        m = 10 ** rng.uniform(-3, 3)
        v = 5 * rng.standard_normal()
        got = metric_prox_l1([v], DiagonalMetric([m]))[0]
        lo, hi = min(0.0, v) - 1, max(0.0, v) + 1
        oracle = golden_section(lambda x: abs(x) + (x - v) ** 2 / (2 * m), lo, hi)
        dev = max(dev, abs(got - oracle))
    ok = dev <= 1e-8
    report_criterion(3, ok, f"1000 draws, max |prox-oracle|={dev:.2e}")
    assert ok


def _eadmm_traces(rng):
    """E-ADMM traces (with their reference zeta*) for identity, random and optimal metrics."""
    out = []
    for i in range(6):
        spec = random_lasso(rng, (5, 10, 20)[i % 3], diagonal_F=bool(i % 2))
        ref = estimate_reference(spec)
        choice = optimal_metric(ref.z_star, ref.lambda_star, eps_floor=1e-12)
        metrics = {
            "identity": DiagonalMetric(np.ones(spec.p)),
            "random": DiagonalMetric(rng.uniform(0.1, 10, spec.p)),
            "optimal": choice.to_metric(),
        }
        for name, M in metrics.items():
            sol, tr = admm_equilibrate(spec, M, cfg=_fixed(5000))
            tr.set_reference(reference_zeta(spec, M, ref.x_star, ref.lambda_star, ref.z_star))
            out.append((f"lasso{i}/{name}", spec, M, sol, tr))
    return out


def test_c4_rate_bound(report_criterion):
    rng = np.random.default_rng(404)
    traces = _eadmm_traces(rng)
    worst, failures = 0.0, []
    for name, _, _, _, tr in traces:
        rate = verify_rate(tr, tr.dist0_sq(), slack=1e-9)
        mono = check_monotone(tr, slack=1e-9)
        worst = max(worst, rate.worst_ratio)
        if not (rate.passed and mono.passed):
            failures.append(name)
    ok = not failures
    report_criterion(4, ok, f"{len(traces)} traces, worst step^2/bound={worst:.3f}, failing={failures}")
    assert ok


def test_c5_hidden_scaling_and_self_duality(report_criterion):
    rng = np.random.default_rng(505)
    worst_cls, worst_eq, failures = 0.0, 0.0, 0
    for i in range(20):
        spec = random_lasso(rng, 5, diagonal_F=bool(i % 2))
        for gamma in (0.5, 2.0, 10.0):
            tp, td = classical_duality_traces(spec, gamma, k=50)
            # psi^k = gamma zeta^k  <=>  alpha^-1 psi = alpha zeta with alpha = sqrt(gamma)
            rep = check_parallel_scaling(td, tp, np.sqrt(gamma), rtol=1e-8)
            dev = max(float(np.linalg.norm(b - gamma * a)) for a, b in zip(tp.points, td.points))
            worst_cls = max(worst_cls, dev)
            failures += (not rep.passed) or dev > 1e-8
        rep = self_duality_check(spec, DiagonalMetric(rng.uniform(0.1, 10, 5)), k=50, tol=1e-8)
        worst_eq = max(worst_eq, rep.max_deviation)
        failures += not rep.passed
    ok = failures == 0 and worst_eq <= 1e-8
    report_criterion(5, ok, f"max |psi-gamma zeta|={worst_cls:.2e}, "
                            f"max equilibrate primal/dual gap={worst_eq:.2e}")
    assert ok


def _state_dev(ta, tb, parts=(0, 1, 2)):
    dev = 0.0
    for sa, sb in zip(ta.states, tb.states):
        for j in parts:
            dev = max(dev, float(np.max(np.abs(sa[j] - sb[j])) / (1 + np.max(np.abs(sb[j])))))
    return dev


def test_c6_reduction_and_preconditioning(report_criterion):
    rng = np.random.default_rng(606)
    red, pre = 0.0, 0.0
    for i in range(10):
        spec = random_lasso(rng, 8, diagonal_F=bool(i % 2))
        for gamma in (0.1, 1.0, 10.0):
            _, ta = admm_equilibrate(spec, DiagonalMetric.scalar(gamma, spec.p), cfg=_fixed(100, 1e-300))
            _, tb = admm_classical(spec, gamma, cfg=_fixed(100, 1e-300))
            red = max(red, _state_dev(ta, tb))
        for base in (spec, random_quadratic_pair(rng, 6)):
            M = DiagonalMetric(rng.uniform(0.1, 10, base.p))
            s = M.s
            scaled = ProblemSpec(base.quad_Q, base.quad_q, base.alpha, F=base.F,
                                 A=s[:, None] * base.A, B=s[:, None] * base.B, c=s * base.c)
            _, ta = admm_equilibrate(base, M, cfg=_fixed(100, 1e-300))
            _, tb = admm_classical(scaled, 1.0, cfg=_fixed(100, 1e-300))
            pre = max(pre, _state_dev(ta, tb, parts=(0,)))
    ok = red <= 1e-10 and pre <= 1e-10
    report_criterion(6, ok, f"reduction max rel dev={red:.2e}, preconditioning x dev={pre:.2e}")
    assert ok


def test_c7_fixed_point_map(report_criterion):
    rng = np.random.default_rng(707)
    solves = [(name, spec, M, tr) for name, spec, M, _, tr in _eadmm_traces(rng)]
    for i in range(4):
        spec = random_quadratic_pair(rng, 6)
        M = DiagonalMetric(rng.uniform(0.1, 10, 6))
        _, tr = admm_equilibrate(spec, M, cfg=_fixed(3000))
        ref = estimate_reference(spec)
        tr.set_reference(reference_zeta(spec, M, ref.x_star, ref.lambda_star, ref.z_star))
        solves.append((f"pair{i}", spec, M, tr))
    step_dev, fix_dev = 0.0, 0.0
    for _, spec, M, tr in solves:
        fmap = admm_fixed_point_map(spec, M)
        for a, b in zip(tr.points[:-1], tr.points[1:]):
            step_dev = max(step_dev, float(np.linalg.norm(fmap(a) - b)))
        fix_dev = max(fix_dev, float(np.linalg.norm(fmap(tr.reference) - tr.reference)))
    ok = step_dev <= 1e-10 and fix_dev <= 1e-9
    report_criterion(7, ok, f"{len(solves)} solves, max |F(zeta^k)-zeta^(k+1)|={step_dev:.2e}, "
                            f"max |F(zeta*)-zeta*|={fix_dev:.2e}")
    assert ok


def test_c8_optimal_metric_scan(report_criterion):
    rng = np.random.default_rng(808)
    grid = np.logspace(-8, 8, 160001)
    worst = -np.inf
    for i in range(100):
        x, lam = rng.standard_normal() * 10 ** rng.uniform(-3, 3), rng.standard_normal()
        if i % 10 == 0:
            x = 0.0
        elif i % 10 == 1:
            lam = 0.0
        elif i % 25 == 2:
            x = lam = 0.0
        m = optimal_metric([x], [lam]).m[0]
        val = x * x / m + m * lam * lam
        scan = float(np.min(x * x / grid + grid * lam * lam))
        worst = max(worst, val - scan)
    ok = worst <= 1e-10
    report_criterion(8, ok, f"100 draws, max value-scan_min={worst:.2e}")
    assert ok


def test_c9_iteration_dominance(report_criterion):
    specs = generate("lasso_dense", 20, 20, seed=909)
    table, dominant = [], 0
    for i, spec in enumerate(specs):
        rows = compare_instance(spec, DEFAULT_GAMMA_GRID, tol=1e-8, kmax=10000)
        classical = [(g, s.iterations if s.converged else np.inf)
                     for t, g, s in rows if t == "classical_scalar"]
        best_g, best_it = min(classical, key=lambda r: r[1])
        opt = rows[-1][2]
        win = opt.converged and opt.iterations <= 2 and best_it > opt.iterations
        dominant += win
        table.append((i, best_g, best_it, opt.iterations, win))
    print("\ninstance  best_gamma  best_classical_iters  optimal_iters  dominant")
    for row in table:
        print(f"{row[0]:8d}  {row[1]:>10}  {row[2]:>20}  {row[3]:>13}  {row[4]}")
    ok = dominant == len(specs)
    report_criterion(9, ok, f"{dominant}/{len(specs)} instances dominant, optimal iterations "
                            f"max={max(r[3] for r in table)}, best classical min={min(r[2] for r in table)}")
    assert ok
