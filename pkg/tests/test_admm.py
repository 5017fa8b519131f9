import numpy as np
import pytest

from equilibrate.admm import (
    AdmmConfig,
    AdmmState,
    NonConvergenceError,
    admm_classical,
    admm_equilibrate,
    admm_fixed_point_map,
    build_unified_dual,
    classical_duality_traces,
    classical_fixed_point_map,
    dual_fixed_point_map,
    reference_zeta,
    self_duality_check,
)
from equilibrate.core import DiagonalMetric, Parametrization, ProblemSpec
from equilibrate.fixedpoint import check_parallel_scaling, iterate
from equilibrate.instances import random_lasso, random_quadratic_pair
from equilibrate.metric_select import estimate_reference, optimal_metric, optimality_residual
from equilibrate.prox import ProxSpec

LASSO_1D = ProblemSpec([[1.0]], [-3.0], 1.0)


def _fixed(k):
    return AdmmConfig(k_max=k, tol=1e-300, stop="fixed_point")


def test_classical_1d_lasso():
    sol, tr = admm_classical(LASSO_1D, 1.0)
    assert sol.converged
    assert sol.x_star == pytest.approx([2.0], abs=1e-8)
    assert sol.lambda_star == pytest.approx([1.0], abs=1e-7)
    assert len(tr.states) == sol.iterations + 1


def test_classical_gamma_independent_solution():
    a, _ = admm_classical(LASSO_1D, 1.0)
    b, _ = admm_classical(LASSO_1D, 10.0)
    assert b.converged and b.x_star == pytest.approx(a.x_star, abs=1e-7)
    assert b.lambda_star == pytest.approx([1.0], abs=1e-6)
    assert a.iterations != b.iterations


def test_infeasible_dimensions():
    with pytest.raises(ValueError):
        admm_classical(LASSO_1D, 1.0, init=AdmmState(np.zeros(2), np.zeros(1), np.zeros(1)))
    with pytest.raises(ValueError):
        admm_equilibrate(LASSO_1D, DiagonalMetric([1.0, 1.0]))
    with pytest.raises(ValueError):
        admm_classical(LASSO_1D, 0.0)


def test_non_separable_b_unsupported():
    spec = ProblemSpec([[1.0, 0], [0, 1.0]], [1.0, 1.0], 1.0, B=[[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(NotImplementedError):
        admm_classical(spec, 1.0)


def test_raise_on_failure():
    cfg = AdmmConfig(k_max=2, tol=1e-14, raise_on_failure=True)
    with pytest.raises(NonConvergenceError) as info:
        admm_classical(LASSO_1D, 0.01, cfg=cfg)
    assert info.value.residual > 1e-14 and info.value.solution.iterations == 2


def test_optimal_metric_one_iteration_1d():
    M = optimal_metric([2.0], [1.0]).to_metric()
    assert M.M[0] == pytest.approx(0.5)
    sol, tr = admm_equilibrate(LASSO_1D, M)
    x1 = tr.states[1][0]
    assert x1 == pytest.approx([2.0], abs=1e-15)
    assert sol.iterations == 1


def test_zeta_recomputable_every_step(rng):
    spec = random_lasso(rng, 6)
    M = DiagonalMetric(rng.uniform(0.2, 5, 6))
    _, tr = admm_equilibrate(spec, M, cfg=_fixed(30))
    s = M.s
    for k in range(1, len(tr.points)):
        x, _, _ = tr.states[k]
        _, _, lam_prev = tr.states[k - 1]
        assert np.allclose(tr.points[k], s * (spec.A @ x) + lam_prev / s, atol=1e-12, rtol=0)


def _max_state_diff(ta, tb):
    dev = 0.0
    for sa, sb in zip(ta.states, tb.states):
        for u, v in zip(sa, sb):
            dev = max(dev, float(np.max(np.abs(u - v)) / (1 + np.max(np.abs(v)))))
    return dev


@pytest.mark.parametrize("gamma", [0.3, 1.0, 7.0])
def test_scalar_metric_reduces_to_classical(rng, gamma):
    spec = random_lasso(rng, 6, diagonal_F=True)
    _, ta = admm_equilibrate(spec, DiagonalMetric.scalar(gamma, 6), cfg=_fixed(60))
    _, tb = admm_classical(spec, gamma, cfg=_fixed(60))
    assert _max_state_diff(ta, tb) <= 1e-10


def test_preconditioning_equivalence(rng):
    spec = random_quadratic_pair(rng, 5)
    M = DiagonalMetric(rng.uniform(0.2, 5, 5))
    s = M.s
    scaled = ProblemSpec(spec.quad_Q, spec.quad_q, spec.alpha, F=spec.F,
                         A=s[:, None] * spec.A, B=s[:, None] * spec.B, c=s * spec.c)
    _, ta = admm_equilibrate(spec, M, cfg=_fixed(60))
    _, tb = admm_classical(scaled, 1.0, cfg=_fixed(60))
    for sa, sb in zip(ta.states, tb.states):
        assert np.max(np.abs(sa[0] - sb[0])) <= 1e-10 * (1 + np.max(np.abs(sb[0])))


@pytest.mark.parametrize("maker", ["lasso", "pair"])
def test_fixed_point_map_consistency(rng, maker):
    spec = random_lasso(rng, 5) if maker == "lasso" else random_quadratic_pair(rng, 5)
    M = DiagonalMetric(rng.uniform(0.2, 5, 5))
    _, tr = admm_equilibrate(spec, M, cfg=_fixed(40))
    fmap = admm_fixed_point_map(spec, M)
    for a, b in zip(tr.points[:-1], tr.points[1:]):
        assert np.linalg.norm(fmap(a) - b) <= 1e-10


def test_classical_map_consistency(rng):
    spec = random_quadratic_pair(rng, 4)
    _, tr = admm_classical(spec, 2.5, cfg=_fixed(30))
    fmap = classical_fixed_point_map(spec, 2.5)
    for a, b in zip(tr.points[:-1], tr.points[1:]):
        assert np.linalg.norm(fmap(a) - b) <= 1e-10


def test_iterate_matches_solver_on_1d():
    M = DiagonalMetric([0.4])
    _, tr = admm_equilibrate(LASSO_1D, M, cfg=_fixed(25))
    fp = iterate(admm_fixed_point_map(LASSO_1D, M), [0.0], k_max=25, tol=1e-300)
    assert np.allclose(np.array(fp.points), np.array(tr.points), atol=1e-12)


def test_fixed_point_invariance(rng):
    spec = random_lasso(rng, 8, diagonal_F=True)
    M = DiagonalMetric(rng.uniform(0.2, 5, 8))
    ref = estimate_reference(spec)
    zstar = reference_zeta(spec, M, ref.x_star, ref.lambda_star)
    fmap = admm_fixed_point_map(spec, M)
    assert np.linalg.norm(fmap(zstar) - zstar) <= 1e-9


def test_map_is_half_averaged(rng):
    spec = random_quadratic_pair(rng, 4)
    M = DiagonalMetric(rng.uniform(0.2, 5, 4))
    fmap = admm_fixed_point_map(spec, M)
    for _ in range(1000):
        x, y = 5 * rng.standard_normal(4), 5 * rng.standard_normal(4)
        nx, ny = 2 * fmap(x) - x, 2 * fmap(y) - y
        assert np.linalg.norm(nx - ny) <= np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12


def test_limit_is_optimal(rng):
    spec = random_lasso(rng, 10)
    sol, _ = admm_equilibrate(spec, DiagonalMetric(rng.uniform(0.2, 5, 10)),
                              cfg=AdmmConfig(tol=1e-9, k_max=20000))
    assert sol.converged and optimality_residual(spec, sol.x_star) <= 1e-9


# --- duality ----------------------------------------------------------------

def test_self_duality_identity_metric_1d():
    rep = self_duality_check(LASSO_1D, DiagonalMetric([1.0]))
    assert rep.passed and rep.max_deviation <= 1e-12


def test_self_duality_random_metric(rng):
    for diag in (False, True):
        spec = random_lasso(rng, 5, diagonal_F=diag)
        rep = self_duality_check(spec, DiagonalMetric(rng.uniform(0.1, 10, 5)), k=50)
        assert rep.passed, rep.max_deviation


def test_self_duality_with_offset(rng):
    spec = random_quadratic_pair(rng, 4)
    rep = self_duality_check(spec, DiagonalMetric(rng.uniform(0.1, 10, 4)),
                             z0=rng.standard_normal(4), k=30)
    assert rep.passed


def test_classical_hidden_scaling(rng):
    spec = random_lasso(rng, 5)
    tp, td = classical_duality_traces(spec, 2.0, k=40)
    dev = max(np.linalg.norm(b - 2.0 * a) for a, b in zip(tp.points, td.points))
    assert dev <= 1e-8
    # classical primal and dual traces do not coincide
    assert not check_parallel_scaling(tp, td, 1.0).passed


def test_dual_map_dispatch(rng):
    spec = random_lasso(rng, 3)
    M = DiagonalMetric.scalar(1.0, 3)
    v = rng.standard_normal(3)
    assert np.allclose(dual_fixed_point_map(spec, M)(v), dual_fixed_point_map(spec, 1.0)(v), atol=1e-12)


def test_rectangular_a_rejected_for_dual():
    F = np.array([[1.0], [2.0]])
    spec = ProblemSpec([[1.0]], [-1.0], 0.5, F=F)
    with pytest.raises(ValueError, match="square"):
        self_duality_check(spec, DiagonalMetric([1.0, 1.0]), k=2)


def _primal_value(spec, g, sol):
    return float(spec.f(sol.x_star) + g(sol.z_star))


def test_unified_dual_quadratic_pair():
    spec = ProblemSpec([[1.0]], [0.0], 1.0)
    g = ProxSpec.quadratic([[1.0]])
    dual = build_unified_dual(spec, DiagonalMetric([1.0]), g=g)
    assert np.isinf(dual.lower).all()
    y = dual.solve()
    assert dual.P.shape == (1, 1) and dual.P[0, 0] == pytest.approx(2.0)
    assert dual.value(y) == pytest.approx(0.0, abs=1e-15)


def test_unified_dual_1d_lasso():
    for param in (DiagonalMetric([1.0]), 1.0, DiagonalMetric([0.25]), 3.0):
        dual = build_unified_dual(LASSO_1D, param)
        y = dual.solve()
        assert dual.to_lambda(y) == pytest.approx([1.0], abs=1e-10)
        p_star = LASSO_1D.objective([2.0])
        assert abs(dual.primal_scale * p_star + dual.value(y)) <= 1e-8 * (1 + abs(p_star))


@pytest.mark.parametrize("tag", ["classical_scalar", "equilibrate_scalar", "equilibrate_operator",
                                 "classical_metric"])
def test_unified_dual_gap_with_offset(rng, tag):
    spec = random_quadratic_pair(rng, 5)
    M = DiagonalMetric(rng.uniform(0.2, 5, 5))
    param = {
        "classical_scalar": Parametrization.classical_scalar(2.0),
        "equilibrate_scalar": Parametrization.equilibrate_scalar(0.7),
        "equilibrate_operator": Parametrization.equilibrate_operator(M),
        "classical_metric": Parametrization.classical_metric(M),
    }[tag]
    dual = build_unified_dual(spec, param)
    assert np.any(dual.r != 0)
    ref = estimate_reference(spec)
    p_star = _primal_value(spec, ProxSpec.l1(spec.alpha), ref)
    y = dual.solve()
    assert abs(dual.primal_scale * p_star + dual.value(y)) <= 1e-8 * (1 + abs(p_star))
    assert np.allclose(dual.to_lambda(y), ref.lambda_star, atol=1e-6)


def test_unified_dual_needs_pd_q():
    spec = ProblemSpec([[0.0]], [1.0], 1.0)
    with pytest.raises(ValueError, match="positive definite"):
        build_unified_dual(spec, 1.0)


def test_reference_zeta_uses_sparse_split_variable(rng):
    spec = random_lasso(rng, 10)
    ref = estimate_reference(spec)
    M = optimal_metric(ref.z_star, ref.lambda_star, eps_floor=1e-12).to_metric()
    fmap = admm_fixed_point_map(spec, M)
    zstar = reference_zeta(spec, M, ref.x_star, ref.lambda_star, ref.z_star)
    assert np.linalg.norm(fmap(zstar) - zstar) <= 1e-9
