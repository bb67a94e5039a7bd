"""Density estimates used in place of unknown source distributions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .domain import DiscreteJointDistribution
from .errors import EmptySample, ValidationError


@dataclass(frozen=True)
class EmpiricalSample:
    """Labelled points drawn from one source (``labels`` are integer indices)."""
    points: np.ndarray
    labels: np.ndarray
    source_id: int = 0
    seed: int | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 1 and np.ndim(self.points) == 1:
            pts = pts.T
        lab = np.asarray(self.labels).reshape(-1)
        if pts.shape[0] == 0:
            raise EmptySample("sample has no points")
        if lab.size != pts.shape[0]:
            raise ValidationError("one label per point required")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab.astype(int))

    def __len__(self):
        return self.points.shape[0]


def _bin_index(points, bins, ranges):
    idx = np.zeros(points.shape[0], dtype=int)
    for d in range(points.shape[1]):
        lo, hi = ranges[d]
        edges = np.linspace(lo, hi, bins + 1)
        b = np.clip(np.searchsorted(edges, points[:, d], side="right") - 1, 0, bins - 1)
        idx = idx * bins + b
    return idx


def estimate_density_histogram(sample: EmpiricalSample, bins: int, smoothing: float = 0.0,
                               n_y: int | None = None, ranges=None) -> DiscreteJointDistribution:
    """Additively smoothed histogram over (feature cell, label).

    Cell probability is ``(count + s) / (N + s * cells)``; any ``s > 0``
    gives full support.  ``ranges`` defaults to the sample's bounding box.
    """
    if len(sample) == 0:
        raise EmptySample("cannot estimate a density from no points")
    if bins < 1 or smoothing < 0:
        raise ValidationError("need bins >= 1 and smoothing >= 0")
    pts = sample.points
    if ranges is None:
        ranges = list(zip(pts.min(axis=0), pts.max(axis=0)))
    n_y = int(sample.labels.max()) + 1 if n_y is None else n_y
    n_x = bins ** pts.shape[1]
    counts = np.zeros((n_x, n_y))
    np.add.at(counts, (_bin_index(pts, bins, ranges), sample.labels), 1.0)
    total = counts.sum() + smoothing * counts.size
    return DiscreteJointDistribution((counts + smoothing) / total)


class GaussianKDE:
    """Isotropic Gaussian-kernel density estimate with a scalar bandwidth."""

    def __init__(self, points, bandwidth: float):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise EmptySample("KDE needs at least one point")
        if not bandwidth > 0:
            raise ValidationError("bandwidth must be positive")
        self.points = pts
        self.bandwidth = float(bandwidth)

    @property
    def dims(self):
        return self.points.shape[1]

    def logpdf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None] if self.dims == 1 else X[None, :]
        h2 = self.bandwidth ** 2
        sq = ((X[:, None, :] - self.points[None]) ** 2).sum(axis=-1)
        norm = 0.5 * self.dims * np.log(2 * np.pi * h2) + np.log(self.points.shape[0])
        return logsumexp(-0.5 * sq / h2, axis=1) - norm

    def __call__(self, X) -> np.ndarray:
        return np.exp(self.logpdf(X))


def cv_log_likelihood(points, bandwidth: float, folds: int = 5, seed: int = 0) -> float:
    """Mean held-out log density under k-fold splitting."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    folds = min(folds, n)
    order = np.random.default_rng(seed).permutation(n)
    score = 0.0
    for f in range(folds):
        test = order[f::folds]
        train = np.setdiff1d(order, test)
        if train.size == 0:
            continue
        score += GaussianKDE(pts[train], bandwidth).logpdf(pts[test]).sum()
    return score / n


def select_bandwidth_cv(points, candidates=None, folds: int = 5, seed: int = 0) -> float:
    pts = np.asarray(points, dtype=float)
    if candidates is None:
        scale = float(np.std(pts)) or 1.0
        candidates = scale * np.logspace(-1.5, 0.5, 15)
    scores = [cv_log_likelihood(pts, h, folds, seed) for h in candidates]
    return float(candidates[int(np.argmax(scores))])


def estimate_density_kde(sample: EmpiricalSample, bandwidth="cv", folds: int = 5) -> GaussianKDE:
    """Gaussian KDE of the sample's features; ``bandwidth="cv"`` picks it by
    held-out likelihood over a small grid."""
    if len(sample) == 0:
        raise EmptySample("cannot estimate a density from no points")
    if isinstance(bandwidth, str):
        if bandwidth != "cv":
            raise ValidationError(f"unknown bandwidth rule {bandwidth!r}")
        bandwidth = select_bandwidth_cv(sample.points, folds=folds, seed=sample.seed or 0)
    return GaussianKDE(sample.points, bandwidth)
