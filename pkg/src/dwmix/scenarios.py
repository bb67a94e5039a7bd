"""Built-in problem instances, the scenario file format and the robustness sweep.

Continuous scenarios are reduced to a weighted table over the pooled sample:
each source's analytic density is evaluated at every pooled point and
normalized over the pool, so the solver only ever sees discrete tables.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dc import DcProblem
from .domain import DiscreteJointDistribution, GaussianMixtureDensity, SimplexVector, mixture
from .errors import ShapeMismatch, ValidationError
from .oracle import GridSpec, grid_points
from .predictors import (CLIP_FLOOR, CROSS_ENTROPY, SQUARED, LossSpec, ProbabilityHypothesis,
                         RegressionHypothesis, combine, convex_combination, expected_loss,
                         label_table, loss_table)

GAUSS_MEANS = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
CLASS_VARIANCES = (0.05, 0.05, 0.3)


@dataclass
class Scenario:
    name: str
    model: str
    sources: list
    hypotheses: list
    loss: LossSpec
    labels: np.ndarray | None = None
    targets: list = field(default_factory=list)      # [(name, SimplexVector)]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in ("R", "P") or self.model != self.loss.model:
            raise ValidationError(f"model {self.model!r} does not match loss {self.loss.kind!r}")
        if len(self.sources) != len(self.hypotheses) or not self.sources:
            raise ShapeMismatch("need one hypothesis per source")
        shapes = {s.shape for s in self.sources}
        if len(shapes) != 1:
            raise ShapeMismatch("sources disagree on (n_x, n_y)")
        for name, lam in self.targets:
            if len(lam) != self.p:
                raise ShapeMismatch(f"target {name!r} has {len(lam)} weights for {self.p} sources")
        worst = self.max_pointwise_loss()
        if worst > self.loss.M * (1 + 1e-12):
            raise ValidationError(f"pointwise loss {worst} exceeds the bound M={self.loss.M}")

    @property
    def p(self) -> int:
        return len(self.sources)

    @property
    def n_x(self) -> int:
        return self.sources[0].n_x

    @property
    def n_y(self) -> int:
        return self.sources[0].n_y

    def max_pointwise_loss(self) -> float:
        return max_pointwise_loss(self.sources, self.hypotheses, self.loss.kind, self.labels)

    def problem(self, eta: float) -> DcProblem:
        return DcProblem(self.sources, self.hypotheses, self.loss, eta, labels=self.labels)

    def expected_loss(self, D, h) -> float:
        return expected_loss(D, h, self.loss, labels=self.labels, clip=True)

    def epsilon(self) -> float:
        """``max_k L(D_k, h_k)``: accuracy of each predictor on its own domain."""
        return max(self.expected_loss(D, h) for D, h in zip(self.sources, self.hypotheses))


def max_pointwise_loss(sources, hypotheses, kind: str, labels=None) -> float:
    """Largest (clipped) pointwise loss of any source predictor on the union
    of source supports."""
    P = np.stack([s.probs for s in sources])
    on = (P > 0).any(axis=0)
    L = LossSpec(kind, 1.0)
    tables = [loss_table(L, h, P.shape[2], labels, clip=True) for h in hypotheses]
    return float(max(t[on].max() for t in tables))


def _targets_for(p: int):
    out = [(f"D_{k + 1}", SimplexVector.vertex(p, k)) for k in range(p)]
    for i in range(p):
        for j in range(i + 1, p):
            w = np.zeros(p)
            w[[i, j]] = 0.5
            out.append((f"D_{i + 1}+D_{j + 1}", SimplexVector(w)))
    if p > 2:
        out.append(("uniform", SimplexVector.uniform(p)))
    return out


# -- instances where every convex combination fails -----------------------

def lower_bound_regression_instance() -> Scenario:
    """X = {a, b}, labels {0, 1}; each source is a point mass its own
    predictor fits exactly, yet every fixed convex combination pays 1/4 on
    the even mixture."""
    D0 = DiscreteJointDistribution.point_mass(2, 2, 0, 0)
    D1 = DiscreteJointDistribution.point_mass(2, 2, 1, 1)
    hs = [RegressionHypothesis([0.0, 0.0]), RegressionHypothesis([1.0, 1.0])]
    labels = np.array([0.0, 1.0])
    M = max_pointwise_loss([D0, D1], hs, SQUARED, labels)
    targets = _targets_for(2) + [("D_T", SimplexVector([0.5, 0.5]))]
    return Scenario("lower-reg", "R", [D0, D1], hs, LossSpec(SQUARED, M), labels, targets,
                    {"densities": "exact", "construction": "two point masses, constant predictors"})


def lower_bound_crossentropy_instance(p: int = 3) -> Scenario:
    if p < 2:
        raise ValidationError("need p >= 2")
    sources = [DiscreteJointDistribution.point_mass(p, p, k, k) for k in range(p)]
    hs = []
    for k in range(p):
        t = np.zeros((p, p))
        t[:, k] = 1.0
        hs.append(ProbabilityHypothesis(t, normalized=True))
    M = max_pointwise_loss(sources, hs, CROSS_ENTROPY)
    return Scenario("lower-xent", "P", sources, hs, LossSpec(CROSS_ENTROPY, M), None, _targets_for(p),
                    {"densities": "exact", "p": p,
                     "loss_bound": f"cross-entropy clipped at -log({CLIP_FLOOR:g})"})


# -- Gaussian synthetic experiments ----------------------------------------

def _reduce(densities: Sequence[np.ndarray]) -> list[DiscreteJointDistribution]:
    out = []
    for d in densities:
        d = np.asarray(d, dtype=float)
        d = d if d.ndim == 2 else d[:, None]
        out.append(DiscreteJointDistribution(d / d.sum()))
    return out


def _least_squares(X, y):
    A = np.column_stack([X, np.ones(len(X))])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef


def _predict_linear(coef, X):
    return X @ coef[:-1] + coef[-1]


def regression_domains():
    return [GaussianMixtureDensity(GAUSS_MEANS[[0, 1, 2]], 1.0),
            GaussianMixtureDensity(GAUSS_MEANS[[1, 2, 3]], 1.0)]


def gaussian_regression_scenario(seed: int = 0, n_samples: int = 200, eval_seed: int | None = None) -> Scenario:
    """Two domains built from four unit-variance Gaussians, labels
    ``x1^2 + x2^2``, one least-squares linear regressor per domain.

    The evaluation table is the pooled training sample, or a fresh pooled
    sample drawn with ``eval_seed``.
    """
    if n_samples < 100:
        raise ValidationError("need at least 100 samples per domain")
    rng = np.random.default_rng(seed)
    domains = regression_domains()
    samples = [d.sample(n_samples, rng) for d in domains]
    f = lambda X: (X ** 2).sum(axis=1)  # noqa: E731
    coefs = [_least_squares(X, f(X)) for X in samples]
    if eval_seed is None:
        S = np.vstack(samples)
    else:
        erng = np.random.default_rng(eval_seed)
        S = np.vstack([d.sample(n_samples, erng) for d in domains])
    sources = _reduce([d.pdf(S) for d in domains])
    hs = [RegressionHypothesis(_predict_linear(c, S)) for c in coefs]
    labels = f(S)[:, None]
    M = max_pointwise_loss(sources, hs, SQUARED, labels)
    return Scenario("gauss-reg", "R", sources, hs, LossSpec(SQUARED, M), labels, _targets_for(2),
                    {"densities": "analytic Gaussian mixture, normalized over the pooled sample",
                     "seed": seed, "n_samples": n_samples, "eval_seed": eval_seed,
                     "regressors": [c.tolist() for c in coefs]})


def _random_orthonormal(rng, d=2):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _softmax(a):
    a = a - a.max(axis=1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=1, keepdims=True)


def train_logistic(X, y, n_classes, iters: int = 500, step: float = 0.1):
    """Multinomial logistic regression by full-batch gradient descent."""
    A = np.column_stack([X, np.ones(len(X))])
    W = np.zeros((A.shape[1], n_classes))
    Y = np.eye(n_classes)[y]
    for _ in range(iters):
        W -= step * A.T @ (_softmax(A @ W) - Y) / len(X)
    return W


def predict_logistic(W, X):
    return _softmax(np.column_stack([X, np.ones(len(X))]) @ W)


def classification_domains(seed: int = 0):
    """Per-domain class-conditional Gaussians: random base means in
    [-2, 2]^2, domain d's means are the base means rotated d times by one
    fixed random orthonormal map."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(-2, 2, size=(3, 2))
    Q = _random_orthonormal(rng)
    means = [base @ np.linalg.matrix_power(Q, d).T for d in range(3)]
    return means, Q, rng


def gaussian_classification_scenario(seed: int = 0, n: int = 100) -> Scenario:
    """Three domains x three categories, per-domain logistic predictors."""
    if n < 50:
        raise ValidationError("need at least 50 points per category")
    means, Q, rng = classification_domains(seed)
    samples, fits = [], []
    for d in range(3):
        X = np.vstack([means[d][c] + np.sqrt(CLASS_VARIANCES[d]) * rng.standard_normal((n, 2))
                       for c in range(3)])
        y = np.repeat(np.arange(3), n)
        samples.append(X)
        fits.append(train_logistic(X, y, 3))
    S = np.vstack(samples)
    dens = []
    for d in range(3):
        cols = [GaussianMixtureDensity(means[d][c][None], CLASS_VARIANCES[d]).pdf(S) / 3 for c in range(3)]
        dens.append(np.column_stack(cols))
    sources = _reduce(dens)
    hs = [ProbabilityHypothesis(predict_logistic(W, S), normalized=True) for W in fits]
    M = max_pointwise_loss(sources, hs, CROSS_ENTROPY)
    return Scenario("gauss-xent", "P", sources, hs, LossSpec(CROSS_ENTROPY, M), None, _targets_for(3),
                    {"densities": "analytic class-conditional Gaussians, normalized over pooled sample x labels",
                     "seed": seed, "n_per_category": n,
                     "means": "uniform in [-2, 2]^2, rotated per domain by a QR-orthonormalized Gaussian matrix",
                     "orthonormal_map": Q.tolist(), "variances": list(CLASS_VARIANCES),
                     "trainer": "multinomial logistic regression, 500 full-batch GD steps, step 0.1"})


BUILTINS = {
    "lower-reg": "two point-mass domains, squared loss (convex combinations pay 1/4)",
    "lower-xent": "p point-mass domains, cross-entropy (convex combinations pay log p)",
    "gauss-reg": "two Gaussian-mixture domains, linear regressors, squared loss",
    "gauss-xent": "three Gaussian domains x three classes, logistic predictors, cross-entropy",
}


def builtin(name: str, seed: int | None = None, p: int | None = None, n: int | None = None) -> Scenario:
    if name == "lower-reg":
        return lower_bound_regression_instance()
    if name == "lower-xent":
        return lower_bound_crossentropy_instance(3 if p is None else p)
    if name == "gauss-reg":
        return gaussian_regression_scenario(0 if seed is None else seed, 200 if n is None else n)
    if name == "gauss-xent":
        return gaussian_classification_scenario(0 if seed is None else seed, 100 if n is None else n)
    raise KeyError(f"unknown builtin scenario {name!r}; choose from {sorted(BUILTINS)}")


# -- scenario files ------------------------------------------------------------

def scenario_to_dict(sc: Scenario) -> dict:
    labels = None if sc.labels is None else np.asarray(sc.labels).tolist()
    return {
        "name": sc.name,
        "model": sc.model,
        "loss": {"kind": sc.loss.kind, "M": sc.loss.M},
        "n_x": sc.n_x,
        "n_y": sc.n_y,
        "labels": labels if labels is not None else [],
        "sources": [{"probs": s.probs.tolist()} for s in sc.sources],
        "hypotheses": [{"values": h.values.tolist()} for h in sc.hypotheses],
        "targets": [{"name": n, "lambda": lam.weights.tolist()} for n, lam in sc.targets],
        "provenance": sc.provenance,
    }


def _require(doc, key, kind):
    if key not in doc:
        raise ValidationError(f"scenario file lacks {key!r}")
    if not isinstance(doc[key], kind):
        raise ValidationError(f"field {key!r} has the wrong type")
    return doc[key]


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ValidationError("scenario document must be an object")
    name = _require(doc, "name", str)
    model = _require(doc, "model", str)
    loss = _require(doc, "loss", dict)
    n_x, n_y = _require(doc, "n_x", int), _require(doc, "n_y", int)
    try:
        sources = [DiscreteJointDistribution(np.asarray(s["probs"], dtype=float).reshape(n_x, n_y))
                   for s in _require(doc, "sources", list)]
        raw_h = [np.asarray(h["values"], dtype=float) for h in _require(doc, "hypotheses", list)]
        if model == "R":
            hs = [RegressionHypothesis(v.reshape(n_x)) for v in raw_h]
        else:
            hs = [ProbabilityHypothesis(v.reshape(n_x, n_y)) for v in raw_h]
        labels = doc.get("labels") or None
        if labels is not None:
            labels = np.asarray(labels, dtype=float)
            label_table(labels, n_x, n_y)
        targets = [(t["name"], SimplexVector(t["lambda"])) for t in doc.get("targets", [])]
        kind = loss["kind"]
        M = loss.get("M")
        if M is None:
            M = max_pointwise_loss(sources, hs, kind, labels)
        spec = LossSpec(kind, float(M))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed scenario: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed scenario: {exc}") from exc
    return Scenario(name, model, sources, hs, spec, labels, targets, doc.get("provenance", {}))


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=1))


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return scenario_from_dict(doc)


# -- robustness sweep ----------------------------------------------------------

SWEEP_RESOLUTION = {2: 0.1, 3: 0.1, 4: 0.2}


@dataclass
class SweepTable:
    p: int
    rows: list  # dicts: target, lambda, dw, unif, h_1..h_p, best_convex

    @property
    def columns(self):
        return ["target", "lambda", "dw", "unif"] + [f"h_{k + 1}" for k in range(self.p)] + ["best_convex"]

    def grid_rows(self):
        return [r for r in self.rows if r["target"] == "grid"]

    def worst(self) -> dict:
        return next(r for r in self.rows if r["target"] == "worst")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            lam = r["lambda"] if isinstance(r["lambda"], str) else " ".join(f"{v:.9g}" for v in r["lambda"])
            w.writerow([r["target"], lam] + [f"{r[c]:.9g}" for c in self.columns[2:]])
        return buf.getvalue()


def robustness_sweep(scenario: Scenario, z, eta: float, resolution: float | None = None,
                     combiner: str = "joint") -> SweepTable:
    """Losses of the DW predictor and the baselines on named targets and on
    every lambda of a simplex grid, plus a final worst-case row.

    ``best_convex`` is the convex combination with weights equal to the
    target's own lambda.
    """
    z = SimplexVector.coerce(z)
    p = scenario.p
    if resolution is None:
        resolution = SWEEP_RESOLUTION.get(p, 0.2)
    h_dw = combine(combiner, z, eta, scenario.sources, scenario.hypotheses)
    h_unif = convex_combination(SimplexVector.uniform(p), scenario.hypotheses)
    # per-source losses, then linearity in lambda
    def per_source(h):
        return np.array([scenario.expected_loss(D, h) for D in scenario.sources])
    L_dw, L_unif = per_source(h_dw), per_source(h_unif)
    L_h = [per_source(h) for h in scenario.hypotheses]
    rows = []

    def row(name, lam):
        lam = np.asarray(lam, dtype=float)
        g = convex_combination(lam, scenario.hypotheses)
        D = mixture(lam, scenario.sources)
        r = {"target": name, "lambda": lam.tolist(), "dw": float(lam @ L_dw), "unif": float(lam @ L_unif),
             "best_convex": scenario.expected_loss(D, g)}
        for k in range(p):
            r[f"h_{k + 1}"] = float(lam @ L_h[k])
        return r

    for name, lam in scenario.targets:
        rows.append(row(name, lam.weights))
    grid = [row("grid", lam) for lam in grid_points(GridSpec(p, resolution))]
    rows.extend(grid)
    worst = {"target": "worst", "lambda": "max"}
    for c in ["dw", "unif", "best_convex"] + [f"h_{k + 1}" for k in range(p)]:
        worst[c] = max(r[c] for r in grid)
    rows.append(worst)
    return SweepTable(p, rows)
