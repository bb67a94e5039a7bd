"""Hypotheses, losses and the combination rules.

Two models are supported:

* regression (``"R"``): ``h(x)`` real-valued, squared loss against a real
  label attached to each ``(x, y)`` cell through a label map;
* probability (``"P"``): ``h(x, y)`` in [0, 1], cross-entropy loss.

Distribution-weighted rules mix the source predictors with per-point weights
``(z_k D_k + eta U / p) / (D_z + eta U)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .domain import DiscreteJointDistribution, SimplexVector, _frozen
from .errors import (DegenerateNormalizer, NonpositiveEta, NonpositiveProbability,
                     ShapeMismatch, ValidationError)

SQUARED = "squared"
CROSS_ENTROPY = "cross_entropy"
# reporting-only floor for -log h
CLIP_FLOOR = 1e-12


@dataclass(frozen=True)
class LossSpec:
    kind: str
    M: float

    def __post_init__(self):
        if self.kind not in (SQUARED, CROSS_ENTROPY):
            raise ValidationError(f"unknown loss kind {self.kind!r}")
        if not self.M > 0:
            raise ValidationError(f"loss bound M must be positive, got {self.M}")

    @property
    def model(self) -> str:
        return "R" if self.kind == SQUARED else "P"


class RegressionHypothesis:
    __slots__ = ("values",)

    def __init__(self, values):
        v = np.asarray(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValidationError("regression hypothesis has non-finite values")
        self.values = _frozen(v)

    model = "R"

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    def __call__(self, x):
        return self.values[x]

    def __repr__(self):
        return f"RegressionHypothesis(n_x={self.n_x})"


class ProbabilityHypothesis:
    """``h(x, y)`` table; ``normalized`` means every row sums to 1 (1e-9)."""

    __slots__ = ("values", "normalized")

    def __init__(self, values, normalized=None):
        v = np.asarray(values, dtype=float)
        if v.ndim != 2:
            raise ValidationError("probability hypothesis must be an (n_x, n_y) table")
        if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
            raise ValidationError("probability hypothesis entries must lie in [0, 1]")
        rows_ok = bool(np.all(np.abs(v.sum(axis=1) - 1.0) <= 1e-9))
        if normalized is None:
            normalized = rows_ok
        elif normalized and not rows_ok:
            raise ValidationError("hypothesis flagged normalized but rows do not sum to 1")
        self.values = _frozen(v)
        self.normalized = bool(normalized)

    model = "P"

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    @property
    def n_y(self) -> int:
        return self.values.shape[1]

    def __call__(self, x, y):
        return self.values[x, y]

    def __repr__(self):
        return f"ProbabilityHypothesis(n_x={self.n_x}, n_y={self.n_y}, normalized={self.normalized})"


Hypothesis = Union[RegressionHypothesis, ProbabilityHypothesis]


def label_table(labels, n_x: int, n_y: int) -> np.ndarray:
    """Broadcast a label map to an ``(n_x, n_y)`` array of real labels.

    ``labels`` is either one value per y-index (shared by all inputs) or a
    full per-cell table; None means the y-index itself is the label.
    """
    if labels is None:
        return np.broadcast_to(np.arange(n_y, dtype=float), (n_x, n_y))
    lab = np.asarray(labels, dtype=float)
    if lab.shape == (n_y,):
        return np.broadcast_to(lab, (n_x, n_y))
    if lab.shape == (n_x, n_y):
        return lab
    raise ShapeMismatch(f"label map of shape {lab.shape} does not fit ({n_x}, {n_y})")


def loss_at(L: LossSpec, h: Hypothesis, x, y) -> float:
    """Pointwise loss.  For the squared loss ``y`` is the real label value;
    for cross-entropy it is the output index."""
    if L.kind == SQUARED:
        return float((h.values[x] - y) ** 2)
    q = h.values[x, y]
    if q <= 0:
        raise NonpositiveProbability(f"h({x}, {y}) = {q}; cross-entropy is infinite")
    return float(-np.log(q))


def loss_table(L: LossSpec, h: Hypothesis, n_y: int | None = None, labels=None,
               clip: bool = False) -> np.ndarray:
    """Pointwise losses on the whole ``(n_x, n_y)`` grid.

    With ``clip`` the cross-entropy is floored at ``-log(CLIP_FLOOR)``;
    otherwise zero probabilities give ``inf``.
    """
    if L.kind == SQUARED:
        if n_y is None:
            n_y = 1 if labels is None else np.shape(labels)[-1]
        lab = label_table(labels, h.n_x, n_y)
        return (h.values[:, None] - lab) ** 2
    v = np.maximum(h.values, CLIP_FLOOR) if clip else h.values
    with np.errstate(divide="ignore"):
        return -np.log(v)


def expected_loss(D: DiscreteJointDistribution, h: Hypothesis, L: LossSpec, labels=None,
                  clip: bool = False) -> float:
    """``sum_{x,y} D(x,y) L(h, x, y)``; cells outside the support are skipped."""
    table = loss_table(L, h, D.n_y, labels, clip=clip)
    on = D.probs > 0
    vals = table[on]
    if not np.all(np.isfinite(vals)):
        raise NonpositiveProbability("hypothesis assigns zero probability on the support")
    return float(np.dot(D.probs[on], vals))


def _stack_values(hs: Sequence[Hypothesis]) -> np.ndarray:
    if not hs:
        raise ValidationError("need at least one hypothesis")
    kinds = {h.model for h in hs}
    shapes = {h.values.shape for h in hs}
    if len(kinds) != 1 or len(shapes) != 1:
        raise ShapeMismatch("hypotheses must share model and shape")
    return np.stack([h.values for h in hs])


def _wrap(values: np.ndarray, like: Hypothesis, normalized=None) -> Hypothesis:
    if like.model == "R":
        return RegressionHypothesis(values)
    # round-off can push convex combinations a hair past [0, 1]
    return ProbabilityHypothesis(np.clip(values, 0.0, 1.0), normalized=normalized)


def convex_combination(alpha, hs: Sequence[Hypothesis]) -> Hypothesis:
    """Pointwise ``sum_k alpha_k h_k``."""
    alpha = SimplexVector.coerce(alpha)
    H = _stack_values(hs)
    if len(alpha) != H.shape[0]:
        raise ShapeMismatch("one weight per hypothesis required")
    out = np.tensordot(alpha.weights, H, axes=1)
    norm = all(getattr(h, "normalized", False) for h in hs) or None
    return _wrap(out, hs[0], normalized=norm)


def _check_eta(eta):
    if not eta > 0:
        raise NonpositiveEta(f"eta must be positive, got {eta}")


def _source_tables(sources: Sequence[DiscreteJointDistribution]) -> np.ndarray:
    shapes = {s.shape for s in sources}
    if len(shapes) != 1:
        raise ShapeMismatch("sources disagree on (n_x, n_y)")
    return np.stack([s.probs for s in sources])


def dw_weights(z, eta: float, densities: np.ndarray) -> np.ndarray:
    """Per-point combination weights for densities of shape ``(p, ...)``.

    ``U`` is uniform over the trailing axes.  The weights over ``k`` sum to
    one at every point.
    """
    _check_eta(eta)
    z = SimplexVector.coerce(z).weights
    p = densities.shape[0]
    if z.size != p:
        raise ShapeMismatch(f"{z.size} weights for {p} sources")
    U = 1.0 / np.prod(densities.shape[1:])
    num = z.reshape((p,) + (1,) * (densities.ndim - 1)) * densities + eta * U / p
    return num / num.sum(axis=0)


def dw_regression(z, eta: float, sources, hs: Sequence[RegressionHypothesis]) -> RegressionHypothesis:
    P = _source_tables(sources)
    H = _stack_values(hs)
    if H.shape[1] != P.shape[1]:
        raise ShapeMismatch("hypotheses and sources disagree on n_x")
    w = dw_weights(z, eta, P.sum(axis=2))
    return RegressionHypothesis((w * H).sum(axis=0))


def dw_probability(z, eta: float, sources, hs: Sequence[ProbabilityHypothesis]) -> ProbabilityHypothesis:
    P = _source_tables(sources)
    H = _stack_values(hs)
    if H.shape[1:] != P.shape[1:]:
        raise ShapeMismatch("hypotheses and sources disagree on (n_x, n_y)")
    w = dw_weights(z, eta, P)
    return _wrap((w * H).sum(axis=0), hs[0], normalized=False)


def dw_normalized(z, eta: float, sources, hs: Sequence[ProbabilityHypothesis]) -> ProbabilityHypothesis:
    if not all(h.normalized for h in hs):
        raise ValidationError("normalized combination requires per-x normalized sources")
    raw = dw_probability(z, eta, sources, hs).values
    den = raw.sum(axis=1, keepdims=True)
    if np.any(den <= 0):
        raise DegenerateNormalizer("combined predictor vanishes for every output at some x")
    return ProbabilityHypothesis(raw / den, normalized=True)


def normalizer(z, eta: float, sources, hs: Sequence[ProbabilityHypothesis]) -> np.ndarray:
    """Row sums ``sum_y h_z(x, y)`` of the unnormalized joint combination."""
    return dw_probability(z, eta, sources, hs).values.sum(axis=1)


def dw_marginal(z, eta: float, sources, hs: Sequence[ProbabilityHypothesis]) -> ProbabilityHypothesis:
    P = _source_tables(sources)
    H = _stack_values(hs)
    if not all(h.normalized for h in hs):
        raise ValidationError("marginal combination requires per-x normalized sources")
    w = dw_weights(z, eta, P.sum(axis=2))
    out = (w[:, :, None] * H).sum(axis=0)
    # rows are convex combinations of unit rows; renormalize away round-off
    out = out / out.sum(axis=1, keepdims=True)
    return ProbabilityHypothesis(out, normalized=True)


def combine(rule: str, z, eta: float, sources, hs):
    """Dispatch by rule name: ``joint``, ``normalized``, ``marginal``, ``regression``."""
    if hs[0].model == "R":
        return dw_regression(z, eta, sources, hs)
    return {"joint": dw_probability, "normalized": dw_normalized,
            "marginal": dw_marginal}[rule](z, eta, sources, hs)
