import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_joint, random_probability, random_regression
from dwmix import checks
from dwmix.dc import (GLOBAL_PLAUSIBLE, LOCAL_ONLY, DcDecomposition, DcProblem, SolverConfig, _mirror_descent,
                      _slsqp_polish, _surrogate, check_balance, dca_solve, eval_jz_kz, fixed_point_iterate,
                      fixed_point_map, grad_v, inner_solve, objective, optimality_certificate, uv_crossentropy,
                      uv_squared)
from dwmix.domain import DiscreteJointDistribution, SimplexVector
from dwmix.errors import InnerStall, NoConvergence, NonpositiveJz, SolverError, ValidationError
from dwmix.oracle import GridSpec, brute_force_minmax
from dwmix.predictors import (CROSS_ENTROPY, SQUARED, LossSpec, ProbabilityHypothesis, RegressionHypothesis,
                              dw_probability, dw_regression)
from dwmix.scenarios import lower_bound_regression_instance

CURVATURES = ["uniform", "pointwise"]


def make(kind, rng, p=3, n_x=5, n_y=4, eta=0.05, curvature="uniform"):
    maker = random_regression if kind == "R" else random_probability
    src, hs, labels, loss = maker(rng, p=p, n_x=n_x, n_y=n_y)
    return DcProblem(src, hs, loss, eta, labels=labels, curvature=curvature)


def lemma_problem(eta=0.01):
    sc = lower_bound_regression_instance()
    return DcProblem(sc.sources, sc.hypotheses, sc.loss, eta, labels=sc.labels)


class TestProblem:
    def test_m_too_small(self, rng):
        src, hs, labels, loss = random_regression(rng)
        with pytest.raises(ValidationError):
            DcProblem(src, hs, LossSpec(SQUARED, loss.M / 2), 0.1, labels=labels)

    def test_model_mismatch(self, rng):
        src, hs, labels, loss = random_regression(rng)
        with pytest.raises(ValidationError):
            DcProblem(src, hs, LossSpec(CROSS_ENTROPY, 5.0), 0.1)
        with pytest.raises(ValidationError):
            DcProblem(src, hs, loss, 0.0, labels=labels)

    def test_single_source_jk(self, rng):
        pr = make("R", rng, p=1)
        J, K = eval_jz_kz(pr, [1.0])
        assert np.allclose(K, pr.Dm[0] + pr.eta * pr.U)
        assert np.allclose(J, K * pr.H[0])
        assert eval_jz_kz(pr, [1.0], point=2) == (J[2], K[2])

    def test_jk_matches_combiners(self, rng):
        pr = make("R", rng)
        pp = make("P", rng)
        for _ in range(100):
            z = rng.dirichlet(np.ones(3))
            J, K = pr.jk(z)
            assert np.allclose(J / K, dw_regression(z, pr.eta, pr.sources, pr.hypotheses).values, rtol=1e-12)
            J, K = pp.jk(z)
            assert np.allclose(J / K, dw_probability(z, pp.eta, pp.sources, pp.hypotheses).values, rtol=1e-12)

    def test_identical_sources_give_mean_hypothesis(self, rng):
        D = random_joint(rng, 5, 4)
        _, hs, labels, loss = random_regression(rng)
        pr = DcProblem([D] * 3, hs, loss, 0.7, labels=labels)
        H = np.stack([h.values for h in hs])
        assert np.allclose(pr.combined(np.full(3, 1 / 3)), H.mean(axis=0), rtol=1e-13)


class TestDecomposition:
    @pytest.mark.parametrize("kind", ["R", "P"])
    @pytest.mark.parametrize("curvature", CURVATURES)
    def test_identity(self, rng, kind, curvature):
        pr = make(kind, rng, curvature=curvature)
        assert checks.decomposition_identity(pr, trials=100).passed

    @pytest.mark.parametrize("kind", ["R", "P"])
    def test_single_source_difference_vanishes(self, rng, kind):
        pr = make(kind, rng, p=1)
        u, v = (uv_squared if kind == "R" else uv_crossentropy)(pr, 0, [1.0])
        assert abs(u - v) <= 1e-12

    @pytest.mark.parametrize("kind", ["R", "P"])
    @pytest.mark.parametrize("curvature", CURVATURES)
    def test_convexity(self, rng, kind, curvature):
        pr = make(kind, rng, curvature=curvature)
        res = checks.convexity(pr, trials=100)
        assert res.passed, res.detail

    def test_regression_split_needs_shared_conditional_mean(self, rng):
        src, hs, labels, loss = random_regression(np.random.default_rng(1132), n_x=3, n_y=2, shared=False)
        pr = DcProblem(src, hs, loss, 0.05, labels=labels)
        assert not pr.shared_conditional_mean()
        assert checks.decomposition_identity(pr).passed
        assert not checks.convexity(pr, trials=500).passed
        assert make("R", rng).shared_conditional_mean()

    def test_xent_v_is_unnormalized_relative_entropy(self, rng):
        pr = make("P", rng)
        dec = DcDecomposition(pr)
        for _ in range(20):
            z = rng.dirichlet(np.ones(3))
            J, K = pr.jk(z)
            B = np.sum(K * np.log(K / J) - K + J)
            ev = dec.evaluate(z)
            W = pr.P + pr.eta * pr.U
            rest = -(W * np.log(K)).sum(axis=(1, 2))
            assert np.allclose(ev.v - rest, B + np.sum(K - J), rtol=1e-12)

    @pytest.mark.parametrize("kind", ["R", "P"])
    @pytest.mark.parametrize("curvature", CURVATURES)
    def test_gradients_match_finite_differences(self, rng, kind, curvature):
        pr = make(kind, rng, curvature=curvature)
        res = checks.gradient(pr, trials=50)
        assert res.passed, res.detail

    def test_gradient_check_catches_errors(self, rng):
        pr = make("R", rng)
        dec = DcDecomposition(pr)

        def broken(z):
            ev = dec.evaluate(z)
            return ev.grad_u, ev.grad_v * 1.001
        assert not checks.gradient(pr, trials=5, grad_fn=broken).passed

    @pytest.mark.parametrize("kind", ["R", "P"])
    def test_gradient_permutation_equivariance(self, rng, kind):
        pr = make(kind, rng)
        perm = np.array([2, 0, 1])
        permuted = DcProblem([pr.sources[i] for i in perm], [pr.hypotheses[i] for i in perm], pr.loss, pr.eta,
                             labels=None if kind == "P" else pr.Y)
        z = rng.dirichlet(np.ones(3))
        for k in range(3):
            g = grad_v(pr, perm[k], z)
            gp = grad_v(permuted, k, z[perm])
            assert np.allclose(gp, g[perm], rtol=1e-11)

    def test_single_source_gradient_has_no_feasible_direction(self, rng):
        pr = make("R", rng, p=1)
        assert grad_v(pr, 0, [1.0]).shape == (1,)

    def test_zero_numerator_raises(self):
        src = [DiscreteJointDistribution([[0.5, 0.5]])] * 2
        hs = [ProbabilityHypothesis([[1.0, 0.0]])] * 2
        pr = DcProblem(src, hs, LossSpec(CROSS_ENTROPY, 30.0), 0.1)
        with pytest.raises(NonpositiveJz):
            DcDecomposition(pr).evaluate(np.array([0.5, 0.5]))

    @given(st.integers(0, 10 ** 6), st.sampled_from(["R", "P"]))
    def test_linearization_majorizes(self, seed, kind):
        rng = np.random.default_rng(seed)
        pr = make(kind, rng, p=3, n_x=3, n_y=2, curvature="pointwise")
        dec = DcDecomposition(pr)
        zt = rng.dirichlet(np.ones(3))
        phi = _surrogate(dec, zt, dec.evaluate(zt))
        for _ in range(5):
            z = rng.dirichlet(np.ones(3))
            assert np.max(phi(z)[0]) >= objective(pr, z)[0] - 1e-9


class TestObjective:
    def test_trivial_zeros(self, rng):
        assert objective(make("R", rng, p=1), [1.0]) == (0.0, 0)
        D = random_joint(rng, 4, 2)
        h = RegressionHypothesis(rng.random(4))
        pr = DcProblem([D, D], [h, h], LossSpec(SQUARED, 4.0), 0.1, labels=[0.0, 1.0])
        assert objective(pr, [0.3, 0.7])[0] == pytest.approx(0.0, abs=1e-15)

    def test_lemma_instance_symmetric_zero(self):
        gamma, _ = objective(lemma_problem(0.01), [0.5, 0.5])
        assert gamma == pytest.approx(0.0, abs=1e-15)

    @given(st.integers(0, 10 ** 6), st.sampled_from(["R", "P"]))
    def test_nonnegative(self, seed, kind):
        rng = np.random.default_rng(seed)
        pr = make(kind, rng, p=3, n_x=3, n_y=2)
        assert objective(pr, rng.dirichlet(np.ones(3)))[0] >= -1e-15


class TestInnerSolver:
    def test_max_of_coordinates(self):
        phi = lambda z: (z.copy(), np.eye(2))  # noqa: E731
        cfg = SolverConfig()
        z, val = _mirror_descent(phi, np.array([0.9, 0.1]), cfg)
        z, val = _slsqp_polish(phi, z, val, 1.0)
        assert val == pytest.approx(0.5, abs=1e-9)
        assert np.allclose(z, [0.5, 0.5], atol=1e-9)

    def test_single_source(self, rng):
        pr = make("R", rng, p=1)
        assert inner_solve(pr, DcDecomposition(pr), [1.0], SolverConfig()).tolist() == [1.0]

    @pytest.mark.parametrize("kind", ["R", "P"])
    def test_matches_grid_search(self, rng, kind):
        pr = make(kind, rng, p=3, n_x=4, n_y=3, curvature="pointwise")
        dec = DcDecomposition(pr)
        zt = rng.dirichlet(np.ones(3))
        phi = _surrogate(dec, zt, dec.evaluate(zt))
        f = lambda z: float(np.max(phi(z)[0]))  # noqa: E731
        z_in = inner_solve(pr, dec, zt, SolverConfig())
        z_grid, v_grid = brute_force_minmax(f, GridSpec(3, 0.01))
        assert f(z_in) <= v_grid + 1e-9
        assert np.max(np.abs(z_in - z_grid.weights)) <= 2 * 0.01

    def test_never_worse_than_start(self, rng):
        pr = make("P", rng)
        dec = DcDecomposition(pr)
        zt = rng.dirichlet(np.ones(3))
        ev = dec.evaluate(zt)
        phi = _surrogate(dec, zt, ev)
        for iters in (1, 3, 50):
            try:
                z_new = inner_solve(pr, dec, zt, SolverConfig(inner_max_iters=iters, polish=False))
            except InnerStall:
                continue
            assert np.max(phi(z_new)[0]) <= np.max(phi(zt)[0]) + 1e-12


class TestDca:
    def test_single_source(self, rng):
        res = dca_solve(make("R", rng, p=1))
        assert res.z.tolist() == [1.0] and res.gamma == 0.0
        assert len(res.trace.records) == 1

    def test_lemma_instance(self):
        pr = lemma_problem(1e-3)
        z_grid, g_grid = brute_force_minmax(lambda z: objective(pr, z)[0], GridSpec(2, 1e-3))
        for z0 in ("uniform", [0.9, 0.1], [0.02, 0.98]):
            res = dca_solve(pr, SolverConfig(z0=z0))
            assert res.gamma <= 1e-6
            assert np.allclose(res.z, [0.5, 0.5], atol=1e-3)
            assert np.allclose(z_grid.weights, [0.5, 0.5], atol=1e-3)
            assert res.certificate == GLOBAL_PLAUSIBLE

    @pytest.mark.parametrize("kind", ["R", "P"])
    @pytest.mark.parametrize("boost", [False, True])
    def test_trace_is_monotone(self, rng, kind, boost):
        pr = make(kind, rng)
        res = dca_solve(pr, SolverConfig(z0=[0.8, 0.1, 0.1], boost=boost, outer_max_iters=30))
        g = res.trace.gammas
        assert np.all(np.diff(g) <= 1e-15)
        assert res.trace.stop_reason in {"gamma_zero", "relative_tol", "inner_stall", "max_iters"}

    def test_restarts_keep_best(self, rng):
        pr = make("P", rng)
        res = dca_solve(pr, SolverConfig(restarts=3, seed=4, outer_max_iters=20))
        assert len(res.restarts) == 4
        assert res.gamma == min(r.gamma for r in res.restarts)
        again = dca_solve(pr, SolverConfig(restarts=3, seed=4, outer_max_iters=20))
        assert np.array_equal(res.z, again.z)

    def test_config_overrides_problem_eta(self, rng):
        pr = make("R", rng, eta=0.5)
        res = dca_solve(pr, SolverConfig(eta=0.01, outer_max_iters=5))
        assert res.gamma == pytest.approx(objective(pr.with_eta(0.01), res.z)[0])

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SolverConfig(eta=0)
        with pytest.raises(ValidationError):
            SolverConfig(outer_max_iters=0)
        with pytest.raises(ValidationError):
            SolverConfig(z0="center").initial_point(2)


class TestFixedPoint:
    def test_uniform_is_fixed_when_losses_equal(self):
        pr = lemma_problem()
        assert np.allclose(fixed_point_map(pr, [0.5, 0.5], 1e-4), [0.5, 0.5], atol=1e-15)

    def test_single_source(self, rng):
        res = fixed_point_iterate(make("R", rng, p=1), [1.0], 1e-4)
        assert res.converged and res.z.tolist() == [1.0]

    def test_lemma_instance(self):
        pr = lemma_problem()
        res = fixed_point_iterate(pr, [0.7, 0.3], 1e-4)
        assert res.residual <= 1e-8
        assert np.allclose(res.z, [0.5, 0.5], atol=1e-6)
        assert np.allclose(res.z, dca_solve(pr).z, atol=1e-3)

    def test_strict_mode_raises(self, rng):
        pr = make("P", rng)
        with pytest.raises(NoConvergence) as info:
            fixed_point_iterate(pr, [0.8, 0.1, 0.1], 1e-4, max_iters=1, strict=True)
        assert info.value.result is not None
        assert not fixed_point_iterate(pr, [0.8, 0.1, 0.1], 1e-4, max_iters=1).converged


class TestBalance:
    def test_single_source_passes(self, rng):
        rep = check_balance(make("R", rng, p=1), [1.0], 1e-4)
        assert rep.passed and rep.max_slack == 0.0

    def test_after_solve_and_adversarial(self):
        pr = lemma_problem(1e-3)
        assert check_balance(pr, dca_solve(pr).z, 1e-4).passed
        bad = check_balance(pr, [1.0, 0.0], 1e-4)
        assert not bad.passed and bad.slacks[1] > 0.1


def test_certificate():
    assert optimality_certificate(0.0, 1e-3) == GLOBAL_PLAUSIBLE
    assert optimality_certificate(0.5, 1e-3) == LOCAL_ONLY
    with pytest.raises(SolverError):
        optimality_certificate(-1.0, 1e-3)
