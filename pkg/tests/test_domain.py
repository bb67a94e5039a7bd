import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from conftest import random_joint
from dwmix.domain import (DiscreteJointDistribution, GaussianMixtureDensity, GuaranteeReport,
                          SimplexVector, conditional_table, conditional_y_given_x, epsilon_target,
                          guarantee_bound, marginal_x, mixture, renyi_d_alpha, renyi_sup_ratio)
from dwmix.errors import ShapeMismatch, SupportViolation, ValidationError, ZeroMarginal

weights = st.lists(st.floats(0.0, 10.0), min_size=1, max_size=6).filter(lambda w: sum(w) > 1e-3)


class TestSimplexVector:
    def test_rejects_negative_and_bad_sum(self):
        with pytest.raises(ValidationError):
            SimplexVector([0.5, -0.1, 0.6])
        with pytest.raises(ValidationError):
            SimplexVector([0.5, 0.6])

    def test_tiny_roundoff_is_renormalized(self):
        z = SimplexVector([0.5, 0.5 + 1e-12])
        assert z.weights.sum() == pytest.approx(1.0, abs=1e-15)

    def test_immutable(self):
        z = SimplexVector.uniform(3)
        with pytest.raises(ValueError):
            z.weights[0] = 1.0

    def test_vertex_and_equality(self):
        assert SimplexVector.vertex(3, 1) == SimplexVector([0, 1, 0])
        assert hash(SimplexVector.uniform(2)) == hash(SimplexVector([0.5, 0.5]))

    @given(weights)
    def test_normalized_weights_are_accepted(self, w):
        w = np.asarray(w) / np.sum(w)
        z = SimplexVector(w)
        assert np.all(z.weights >= 0)
        assert abs(z.weights.sum() - 1) <= 1e-12


class TestJointDistribution:
    def test_marginals(self):
        assert np.allclose(marginal_x(DiscreteJointDistribution.uniform(2, 2)), [0.5, 0.5])
        assert np.allclose(marginal_x(DiscreteJointDistribution.point_mass(2, 2, 0, 1)), [1.0, 0.0])
        D = DiscreteJointDistribution([[0.1, 0.2], [0.3, 0.4]])
        assert np.allclose(marginal_x(D), [0.3, 0.7], atol=1e-15)

    def test_conditionals(self):
        assert np.allclose(conditional_y_given_x(DiscreteJointDistribution.uniform(2, 2), 0).weights, [0.5, 0.5])
        pm = DiscreteJointDistribution.point_mass(2, 2, 0, 1)
        assert np.allclose(conditional_y_given_x(pm, 0).weights, [0.0, 1.0])
        D = DiscreteJointDistribution([[0.1, 0.2], [0.3, 0.4]])
        assert np.allclose(conditional_y_given_x(D, 1).weights, [3 / 7, 4 / 7], atol=1e-15)
        with pytest.raises(ZeroMarginal):
            conditional_y_given_x(pm, 1)

    def test_conditional_table_fallback(self):
        pm = DiscreteJointDistribution.point_mass(2, 3, 0, 1)
        assert np.allclose(conditional_table(pm)[1], 1 / 3)
        fb = np.array([[0, 0, 1.0], [1.0, 0, 0]])
        assert np.allclose(conditional_table(pm, fb)[1], [1, 0, 0])

    def test_validation(self):
        with pytest.raises(ValidationError):
            DiscreteJointDistribution([[0.5, 0.6]])
        with pytest.raises(ValidationError):
            DiscreteJointDistribution([[1.2, -0.2]])
        with pytest.raises(ValidationError):
            DiscreteJointDistribution(np.full((2, 2, 2), 0.125))
        # a flat vector is a single-output table
        assert DiscreteJointDistribution([0.5, 0.5]).shape == (2, 1)


class TestMixture:
    def test_degenerate_and_identical(self, rng):
        D1, D2 = random_joint(rng, 3, 2), random_joint(rng, 3, 2)
        assert np.array_equal(mixture([1, 0], [D1, D2]).probs, D1.probs)
        assert np.allclose(mixture([0.5, 0.5], [D1, D1]).probs, D1.probs, atol=1e-15)

    def test_point_mass_target(self):
        D0 = DiscreteJointDistribution.point_mass(2, 2, 0, 0)
        D1 = DiscreteJointDistribution.point_mass(2, 2, 1, 1)
        assert np.allclose(mixture([0.5, 0.5], [D0, D1]).probs, [[0.5, 0], [0, 0.5]])

    def test_shape_errors(self, rng):
        with pytest.raises(ShapeMismatch):
            mixture([0.5, 0.5], [random_joint(rng, 2, 2), random_joint(rng, 3, 2)])
        with pytest.raises(ShapeMismatch):
            mixture([1.0], [random_joint(rng, 2, 2), random_joint(rng, 2, 2)])

    @given(st.integers(0, 10 ** 6), weights)
    def test_mixture_is_distribution_and_linear(self, seed, w):
        rng = np.random.default_rng(seed)
        lam = np.asarray(w) / np.sum(w)
        srcs = [random_joint(rng, 3, 2, zeros=0.3) for _ in lam]
        M = mixture(lam, srcs)
        assert abs(M.probs.sum() - 1) <= 1e-12
        f = rng.random((3, 2))
        assert np.sum(M.probs * f) == pytest.approx(sum(l * np.sum(s.probs * f) for l, s in zip(lam, srcs)))


def renyi_loop(P, Q, alpha):
    total = 0.0
    for p, q in zip(np.ravel(P), np.ravel(Q)):
        if p > 0:
            total += p ** alpha / q ** (alpha - 1)
    return total ** (1 / (alpha - 1))


class TestRenyi:
    def test_identity(self, rng):
        D = random_joint(rng, 4, 3)
        for a in (1.5, 2, 10, 100):
            assert renyi_d_alpha(D, D, a) == pytest.approx(1.0, abs=1e-12)
        assert renyi_sup_ratio(D, D) == pytest.approx(1.0, abs=1e-15)

    def test_two_point_value(self):
        assert renyi_d_alpha([0.5, 0.5], [0.25, 0.75], 2) == pytest.approx(4 / 3, rel=1e-14)
        assert renyi_sup_ratio([0.5, 0.5], [0.25, 0.75]) == pytest.approx(2.0, rel=1e-15)

    def test_point_mass_against_uniform_equals_n(self):
        n = 5
        P = np.eye(n)[0]
        Q = np.full(n, 1 / n)
        for a in (2, 10, 100):
            assert renyi_d_alpha(P, Q, a) == pytest.approx(n, rel=1e-12)
            assert renyi_loop(P, Q, a) == pytest.approx(n, rel=1e-12)
        assert renyi_sup_ratio(P, Q) == pytest.approx(n)

    def test_matches_direct_sum(self, rng):
        for _ in range(20):
            P, Q = random_joint(rng, 3, 3, zeros=0.3), random_joint(rng, 3, 3)
            a = rng.uniform(1.1, 20)
            assert renyi_d_alpha(P, Q, a) == pytest.approx(renyi_loop(P.probs, Q.probs, a), rel=1e-10)

    def test_extreme_order_is_finite(self, rng):
        P, Q = random_joint(rng, 4, 4), random_joint(rng, 4, 4)
        val = renyi_d_alpha(P, Q, 5000)
        assert np.isfinite(val) and val <= renyi_sup_ratio(P, Q) + 1e-9

    def test_errors(self):
        with pytest.raises(SupportViolation):
            renyi_d_alpha([0.5, 0.5], [1.0, 0.0], 2)
        with pytest.raises(SupportViolation):
            renyi_sup_ratio([0.5, 0.5], [1.0, 0.0])
        with pytest.raises(ValidationError):
            renyi_d_alpha([0.5, 0.5], [0.5, 0.5], 1.0)

    @given(st.integers(0, 10 ** 6))
    def test_monotone_in_alpha_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        P, Q = random_joint(rng, 4, 4, zeros=0.2), random_joint(rng, 4, 4)
        vals = [renyi_d_alpha(P, Q, a) for a in (1.5, 2, 5, 10, 50)]
        assert all(b >= a - 1e-12 * a for a, b in zip(vals, vals[1:]))
        assert vals[-1] <= renyi_sup_ratio(P, Q) + 1e-9
        assert vals[0] >= 1 - 1e-12


def epsilon_target_loop(D_T, sources, alpha, eps, M):
    T = D_T.probs
    worst = 0.0
    for s in sources:
        S = s.probs
        total = 0.0
        for x in range(S.shape[0]):
            sx, tx = S[x].sum(), T[x].sum()
            if sx == 0:
                continue
            if tx == 0:
                total += sx
                continue
            inner = sum((T[x, y] / tx) ** alpha / (S[x, y] / sx) ** (alpha - 1)
                        for y in range(S.shape[1]) if T[x, y] > 0)
            total += sx * inner
        worst = max(worst, total)
    return worst ** (1 / alpha) * eps ** ((alpha - 1) / alpha) * M ** (1 / alpha)


class TestGuarantees:
    def test_identical_conditionals(self, rng):
        cond = np.array([[0.3, 0.7], [0.6, 0.4], [0.5, 0.5]])
        def with_marg(m):
            return DiscreteJointDistribution(cond * (np.asarray(m) / np.sum(m))[:, None])
        srcs = [with_marg([1, 2, 3]), with_marg([3, 1, 1])]
        val = epsilon_target(with_marg([1, 1, 5]), srcs, 10, 0.04, 1.0)
        assert val == pytest.approx(0.0551891864584486, rel=1e-12)
        assert epsilon_target(with_marg([1, 1, 5]), srcs, 10, 0.0, 1.0) == 0.0

    def test_distinct_conditionals_match_loop(self, rng):
        for _ in range(10):
            srcs = [random_joint(rng, 4, 3), random_joint(rng, 4, 3)]
            T = random_joint(rng, 4, 3, zeros=0.3)
            a = rng.uniform(1.5, 8)
            got = epsilon_target(T, srcs, a, 0.1, 3.0)
            assert got == pytest.approx(epsilon_target_loop(T, srcs, a, 0.1, 3.0), rel=1e-10)

    def test_bound_values(self):
        assert guarantee_bound(0.1, 0.01, 1.2, 4, 2) == pytest.approx(0.726636084983398, rel=1e-12)
        assert guarantee_bound(0, 0, 1.7, 4, 3) == 0.0
        assert guarantee_bound(0.08, 0.02, 1.0, 10, 1000) == pytest.approx(0.1, rel=0.01)
        rep = GuaranteeReport.compute(0.1, 0.01, 1.2, 4, 2)
        assert rep.bound_value == guarantee_bound(0.1, 0.01, 1.2, 4, 2)

    def test_bound_rejects_bad_input(self):
        with pytest.raises(ValidationError):
            guarantee_bound(-0.1, 0, 1, 1, 2)
        with pytest.raises(ValidationError):
            guarantee_bound(0.1, 0, 1, 1, 1)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(1, 5), st.floats(1.01, 50))
    def test_bound_monotone_in_divergence(self, eps, delta, d, alpha):
        assert guarantee_bound(eps, delta, d * 1.1, 4, alpha) >= guarantee_bound(eps, delta, d, 4, alpha)


class TestGaussianMixture:
    def test_pdf_matches_scipy(self, rng):
        means = rng.normal(size=(3, 2))
        var = [0.5, 1.0, 2.0]
        w = [0.2, 0.3, 0.5]
        g = GaussianMixtureDensity(means, var, w)
        X = rng.normal(size=(50, 2))
        ref = sum(wi * multivariate_normal(m, vi * np.eye(2)).pdf(X) for m, vi, wi in zip(means, var, w))
        assert np.allclose(g.pdf(X), ref, rtol=1e-12)

    def test_sampling_moments(self):
        g = GaussianMixtureDensity([[1.0, -1.0]], 0.25)
        X = g.sample(20000, np.random.default_rng(0))
        assert np.allclose(X.mean(axis=0), [1, -1], atol=0.02)
        assert np.allclose(X.var(axis=0), 0.25, rtol=0.05)

    def test_validation(self):
        with pytest.raises(ValidationError):
            GaussianMixtureDensity([[0.0, 0.0]], 0.0)
        with pytest.raises(ShapeMismatch):
            GaussianMixtureDensity([[0.0, 0.0], [1.0, 1.0]], [1.0, 1.0, 1.0])

