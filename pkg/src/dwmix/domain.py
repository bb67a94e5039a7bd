"""Finite probability spaces, simplex weights, Rényi divergences and the
guarantee-bound calculators.

All tables are dense ``float64`` arrays indexed ``[x, y]``.  Objects are
immutable once built; the underlying arrays are flagged read-only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import ShapeMismatch, SupportViolation, ValidationError, ZeroMarginal

# deviation from 1 that construction silently absorbs
RENORMALIZE_TOL = 1e-9
# negative round-off clamped to zero in simplex vectors
CLAMP_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _normalized(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} has non-finite entries")
    arr = np.where((arr < 0) & (arr >= -CLAMP_TOL), 0.0, arr)
    if np.any(arr < 0):
        raise ValidationError(f"{what} has negative entries (min {arr.min():.3g})")
    total = arr.sum()
    if abs(total - 1.0) > RENORMALIZE_TOL:
        raise ValidationError(f"{what} sums to {total!r}, not 1")
    return arr / total


class SimplexVector:
    """Nonnegative weights summing to one (z, lambda, alpha...)."""

    __slots__ = ("_w",)

    def __init__(self, weights):
        w = np.array(weights, dtype=float).reshape(-1)
        if w.size < 1:
            raise ValidationError("simplex vector needs at least one entry")
        self._w = _frozen(_normalized(w, "simplex vector"))

    @classmethod
    def uniform(cls, p: int) -> "SimplexVector":
        return cls(np.full(p, 1.0 / p))

    @classmethod
    def vertex(cls, p: int, k: int) -> "SimplexVector":
        w = np.zeros(p)
        w[k] = 1.0
        return cls(w)

    @classmethod
    def coerce(cls, z) -> "SimplexVector":
        return z if isinstance(z, cls) else cls(z)

    @property
    def weights(self) -> np.ndarray:
        return self._w

    def __array__(self, dtype=None, copy=None):
        return self._w if dtype is None else self._w.astype(dtype)

    def __len__(self):
        return self._w.size

    def __getitem__(self, k):
        return self._w[k]

    def __iter__(self):
        return iter(self._w.tolist())

    def __eq__(self, other):
        if not isinstance(other, SimplexVector):
            return NotImplemented
        return self._w.shape == other._w.shape and bool(np.all(self._w == other._w))

    def __hash__(self):
        return hash(self._w.tobytes())

    def __repr__(self):
        return f"SimplexVector({np.array2string(self._w, precision=6)})"


class DiscreteJointDistribution:
    """Probability table over a finite X x Y."""

    __slots__ = ("_p",)

    def __init__(self, probs):
        p = np.array(probs, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValidationError(f"probability table must be 2-d and nonempty, got shape {p.shape}")
        self._p = _frozen(_normalized(p, "probability table"))

    @classmethod
    def uniform(cls, n_x: int, n_y: int) -> "DiscreteJointDistribution":
        return cls(np.full((n_x, n_y), 1.0 / (n_x * n_y)))

    @classmethod
    def point_mass(cls, n_x: int, n_y: int, x: int, y: int) -> "DiscreteJointDistribution":
        p = np.zeros((n_x, n_y))
        p[x, y] = 1.0
        return cls(p)

    @property
    def probs(self) -> np.ndarray:
        return self._p

    @property
    def n_x(self) -> int:
        return self._p.shape[0]

    @property
    def n_y(self) -> int:
        return self._p.shape[1]

    @property
    def shape(self):
        return self._p.shape

    def __array__(self, dtype=None, copy=None):
        return self._p if dtype is None else self._p.astype(dtype)

    def __repr__(self):
        return f"DiscreteJointDistribution(n_x={self.n_x}, n_y={self.n_y})"


def marginal_x(D: DiscreteJointDistribution) -> np.ndarray:
    """Marginal over inputs, ``D(x) = sum_y D(x, y)``."""
    return D.probs.sum(axis=1)


def conditional_y_given_x(D: DiscreteJointDistribution, x: int) -> SimplexVector:
    dx = D.probs[x].sum()
    if dx <= 0:
        raise ZeroMarginal(f"D(x={x}) = 0; conditional undefined")
    return SimplexVector(D.probs[x] / dx)


def conditional_table(D: DiscreteJointDistribution, fallback=None) -> np.ndarray:
    """All conditionals ``D(y|x)`` at once.

    Rows with zero marginal are filled from ``fallback`` (an ``(n_x, n_y)``
    array of conditional rows) or, if that is None, with the uniform row.
    """
    p = D.probs
    dx = p.sum(axis=1, keepdims=True)
    out = np.divide(p, dx, out=np.zeros_like(p), where=dx > 0)
    empty = dx[:, 0] <= 0
    if np.any(empty):
        out[empty] = (np.full(p.shape[1], 1.0 / p.shape[1]) if fallback is None
                      else np.asarray(fallback)[empty])
    return out


def _check_same_shape(sources: Sequence[DiscreteJointDistribution]):
    shapes = {s.shape for s in sources}
    if len(shapes) != 1:
        raise ShapeMismatch(f"sources disagree on (n_x, n_y): {sorted(shapes)}")


def mixture(lam, sources: Sequence[DiscreteJointDistribution]) -> DiscreteJointDistribution:
    lam = SimplexVector.coerce(lam)
    if len(lam) != len(sources):
        raise ShapeMismatch(f"{len(lam)} weights for {len(sources)} sources")
    _check_same_shape(sources)
    table = np.tensordot(lam.weights, np.stack([s.probs for s in sources]), axes=1)
    return DiscreteJointDistribution(table)


def _as_table(D) -> np.ndarray:
    return D.probs if isinstance(D, DiscreteJointDistribution) else np.asarray(D, dtype=float)


def _support_pairs(D, Dp):
    a, b = _as_table(D), _as_table(Dp)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    on = a > 0
    if np.any(on & (b <= 0)):
        raise SupportViolation("D has mass outside the support of D'")
    return a[on], b[on]


def renyi_d_alpha(D, Dp, alpha: float) -> float:
    """Exponentiated Rényi divergence ``d_alpha(D || Dp)``.

    Accepts distributions or raw arrays of matching shape.  Terms with
    ``D = 0`` contribute nothing.
    """
    if not alpha > 1:
        raise ValidationError(f"Rényi order must exceed 1, got {alpha}")
    a, b = _support_pairs(D, Dp)
    log_sum = logsumexp(alpha * np.log(a) - (alpha - 1.0) * np.log(b))
    return float(np.exp(log_sum / (alpha - 1.0)))


def renyi_sup_ratio(D, Dp) -> float:
    """``d_inf(D || Dp) = sup D/Dp`` over the support of D."""
    a, b = _support_pairs(D, Dp)
    return float(np.max(a / b))


def epsilon_target(D_T: DiscreteJointDistribution, sources: Sequence[DiscreteJointDistribution],
                   alpha: float, epsilon: float, M: float) -> float:
    """Accuracy level on a target whose conditionals differ from the sources'.

    Where ``D_T(x) = 0`` the target conditional is undefined; it is taken
    equal to the source conditional there (divergence 1).
    """
    if not alpha > 1:
        raise ValidationError("alpha must exceed 1")
    if epsilon < 0 or M <= 0:
        raise ValidationError("need epsilon >= 0 and M > 0")
    _check_same_shape([D_T, *sources])
    t = D_T.probs
    t_marg = t.sum(axis=1)
    worst = 0.0
    for src in sources:
        s = src.probs
        s_marg = s.sum(axis=1)
        expectation = 0.0
        for x in np.flatnonzero(s_marg > 0):
            if t_marg[x] <= 0:
                expectation += s_marg[x]
                continue
            # d_alpha^(alpha-1) is the raw sum, no root needed
            a, b = _support_pairs(t[x] / t_marg[x], s[x] / s_marg[x])
            expectation += s_marg[x] * float(np.exp(logsumexp(alpha * np.log(a) - (alpha - 1) * np.log(b))))
        worst = max(worst, expectation)
    return worst ** (1 / alpha) * epsilon ** ((alpha - 1) / alpha) * M ** (1 / alpha)


def guarantee_bound(epsilon: float, delta: float, d_alpha: float, M: float, alpha: float) -> float:
    """Hölder-type bound ``[(eps + delta) d_alpha]^((alpha-1)/alpha) M^(1/alpha)``."""
    if min(epsilon, delta, d_alpha) < 0 or M <= 0 or not alpha > 1:
        raise ValidationError("invalid guarantee arguments")
    return ((epsilon + delta) * d_alpha) ** ((alpha - 1) / alpha) * M ** (1 / alpha)


@dataclass(frozen=True)
class GuaranteeReport:
    alpha: float
    epsilon: float
    delta: float
    M: float
    d_alpha: float
    bound_value: float

    @classmethod
    def compute(cls, epsilon, delta, d_alpha, M, alpha) -> "GuaranteeReport":
        return cls(alpha=alpha, epsilon=epsilon, delta=delta, M=M, d_alpha=d_alpha,
                   bound_value=guarantee_bound(epsilon, delta, d_alpha, M, alpha))


class GaussianMixtureDensity:
    """Mixture of isotropic Gaussians with an analytic pdf."""

    def __init__(self, means, variances, weights=None):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        variances = np.asarray(variances, dtype=float).reshape(-1)
        if variances.size == 1 and means.shape[0] > 1:
            variances = np.full(means.shape[0], variances[0])
        if variances.shape[0] != means.shape[0]:
            raise ShapeMismatch("one variance per component required")
        if np.any(variances <= 0):
            raise ValidationError("variances must be positive")
        if weights is None:
            weights = np.full(means.shape[0], 1.0 / means.shape[0])
        self.means = _frozen(means)
        self.variances = _frozen(variances)
        self.weights = SimplexVector(weights)

    @property
    def dims(self) -> int:
        return self.means.shape[1]

    def logpdf(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d = self.dims
        sq = ((X[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=-1)
        comp = (-0.5 * sq / self.variances - 0.5 * d * np.log(2 * np.pi * self.variances)
                + np.log(np.maximum(self.weights.weights, 1e-300)))
        return logsumexp(comp, axis=1)

    def pdf(self, X) -> np.ndarray:
        return np.exp(self.logpdf(X))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.means.shape[0], size=n, p=self.weights.weights)
        noise = rng.standard_normal((n, self.dims))
        return self.means[comp] + noise * np.sqrt(self.variances[comp])[:, None]
