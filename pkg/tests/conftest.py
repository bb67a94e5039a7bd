import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dwmix.domain import DiscreteJointDistribution
from dwmix.predictors import CROSS_ENTROPY, SQUARED, LossSpec, ProbabilityHypothesis, RegressionHypothesis

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_joint(rng, n_x, n_y, zeros=0.0):
    t = rng.random((n_x, n_y)) + 0.05
    if zeros:
        t[rng.random((n_x, n_y)) < zeros] = 0.0
        if t.sum() == 0:
            t[0, 0] = 1.0
    return DiscreteJointDistribution(t / t.sum())


def random_regression(rng, p=3, n_x=5, n_y=4, shared=True):
    """Sources, hypotheses, label map and a valid loss bound.

    With ``shared`` all sources use one conditional ``D(y|x)`` and differ
    only in their input marginals, the setting where the squared-loss
    split is convex.
    """
    if shared:
        cond = rng.random((n_x, n_y)) + 0.05
        cond /= cond.sum(axis=1, keepdims=True)
        sources = []
        for _ in range(p):
            m = rng.random(n_x) + 0.05
            sources.append(DiscreteJointDistribution((m / m.sum())[:, None] * cond))
    else:
        sources = [random_joint(rng, n_x, n_y) for _ in range(p)]
    hs = [RegressionHypothesis(rng.uniform(-1, 2, n_x)) for _ in range(p)]
    labels = rng.uniform(-1, 2, n_y)
    H = np.stack([h.values for h in hs])
    M = float(((H[:, :, None] - labels) ** 2).max())
    return sources, hs, labels, LossSpec(SQUARED, M)


def random_probability(rng, p=3, n_x=5, n_y=4, normalized=True):
    sources = [random_joint(rng, n_x, n_y) for _ in range(p)]
    hs = []
    for _ in range(p):
        t = rng.random((n_x, n_y)) + 0.05
        if normalized:
            t /= t.sum(axis=1, keepdims=True)
        else:
            t /= t.max()
        hs.append(ProbabilityHypothesis(t))
    M = float(max(-np.log(h.values).max() for h in hs))
    return sources, hs, None, LossSpec(CROSS_ENTROPY, M)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
