"""Min-max search for the mixture weight ``z`` by DC programming.

The problem is ``min_z max_k L(D_k, h_z) - L(D_z, h_z)`` over the simplex.
Each constraint splits as ``u_k(z) - v_k(z)`` with ``u_k``, ``v_k`` convex;
the DCA linearizes ``v_k`` at the current iterate and solves the resulting
convex min-max subproblem, which never increases the true objective.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .domain import DiscreteJointDistribution, SimplexVector
from .errors import (InnerStall, NoConvergence, NonpositiveJz, ShapeMismatch, SolverError,
                     ValidationError)
from .predictors import (CROSS_ENTROPY, SQUARED, Hypothesis, LossSpec, ProbabilityHypothesis,
                         RegressionHypothesis, label_table)

log = logging.getLogger(__name__)

GLOBAL_PLAUSIBLE = "global_plausible"
LOCAL_ONLY = "local_only"


class DcProblem:
    """Immutable bundle of sources, predictors, loss and smoothing ``eta``.

    Model ``"R"`` pairs real-valued hypotheses with the squared loss, model
    ``"P"`` pairs probability tables with the cross-entropy.
    """

    def __init__(self, sources: Sequence[DiscreteJointDistribution], hypotheses: Sequence[Hypothesis],
                 loss: LossSpec, eta: float, labels=None, curvature: str = "uniform"):
        if len(sources) < 1 or len(sources) != len(hypotheses):
            raise ShapeMismatch("need p >= 1 sources and exactly one hypothesis per source")
        if not eta > 0:
            raise ValidationError(f"eta must be positive, got {eta}")
        shapes = {s.shape for s in sources}
        if len(shapes) != 1:
            raise ShapeMismatch("sources disagree on (n_x, n_y)")
        if curvature not in ("uniform", "pointwise"):
            raise ValidationError(f"unknown curvature mode {curvature!r}")
        self.curvature = curvature
        self.model = loss.model
        self.loss = loss
        self.eta = float(eta)
        self.sources = tuple(sources)
        self.hypotheses = tuple(hypotheses)
        P = np.stack([s.probs for s in sources])
        self.p, self.n_x, self.n_y = P.shape
        self.P = P
        self.U = 1.0 / (self.n_x if self.model == "R" else self.n_x * self.n_y)
        H = np.stack([h.values for h in hypotheses])
        if self.model == "R":
            if not all(isinstance(h, RegressionHypothesis) for h in hypotheses):
                raise ValidationError("squared loss needs regression hypotheses")
            if H.shape != (self.p, self.n_x):
                raise ShapeMismatch(f"hypothesis tables {H.shape} vs n_x={self.n_x}")
            self.Y = np.array(label_table(labels, self.n_x, self.n_y))
            self.Dm = P.sum(axis=2)
            self.C = self._conditionals()
            self.H = H
            need = self.required_m()
            # per-cell bound on (y - h_z(x))^2 over the predictor envelope
            self.Mxy = ((self.H[:, :, None] - self.Y[None]) ** 2).max(axis=0)
            if loss.M < need * (1 - 1e-12):
                raise ValidationError(f"loss bound M={loss.M} below the pointwise maximum {need}")
            if not self.shared_conditional_mean():
                log.warning("sources disagree on E[y|x]; v_k need not be convex and the DCA "
                            "surrogate may fail to majorize")
        else:
            if not all(isinstance(h, ProbabilityHypothesis) for h in hypotheses):
                raise ValidationError("cross-entropy needs probability hypotheses")
            if H.shape != P.shape:
                raise ShapeMismatch(f"hypothesis tables {H.shape} vs sources {P.shape}")
            self.H = H
            self.Y = None

    def _conditionals(self) -> np.ndarray:
        # D_k(.|x) where D_k(x) = 0: pooled conditional of the other sources,
        # uniform where no source has mass
        P, Dm = self.P, self.Dm
        tot = P.sum(axis=0)
        tot_m = tot.sum(axis=1, keepdims=True)
        pooled = np.divide(tot, tot_m, out=np.full_like(tot, 1.0 / self.n_y), where=tot_m > 0)
        C = np.empty_like(P)
        for k in range(self.p):
            m = Dm[k][:, None]
            C[k] = np.divide(P[k], m, out=pooled.copy(), where=m > 0)
        return C

    def shared_conditional_mean(self, tol: float = 1e-9) -> bool:
        """True when every source has the same ``E[y|x]`` wherever it has mass.

        The convexity of ``v_k`` in the squared-loss split rests on this.
        """
        mean = (self.C * self.Y[None]).sum(axis=2)          # (p, n_x)
        on = self.Dm > 0
        for x in range(self.n_x):
            vals = mean[on[:, x], x]
            if vals.size and np.ptp(vals) > tol * max(1.0, np.abs(vals).max()):
                return False
        return True

    def required_m(self) -> float:
        """Smallest M making every u_k convex (model R)."""
        weight = self.P + self.U * self.C
        sq = (self.H[:, :, None][:, None] - self.Y[None, None]) ** 2  # (p_h, 1, n_x, n_y)
        on = (weight > 0).any(axis=0)
        return float(sq[:, 0][:, on].max()) if on.any() else 0.0

    def with_eta(self, eta: float) -> "DcProblem":
        return DcProblem(self.sources, self.hypotheses, self.loss, eta, labels=self.Y,
                         curvature=self.curvature)

    # -- combination ------------------------------------------------------
    def jk(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        if self.model == "R":
            K = z @ self.Dm + self.eta * self.U
            J = z @ (self.Dm * self.H) + (self.eta * self.U / self.p) * self.H.sum(axis=0)
        else:
            K = np.tensordot(z, self.P, axes=1) + self.eta * self.U
            J = (np.tensordot(z, self.P * self.H, axes=1)
                 + (self.eta * self.U / self.p) * self.H.sum(axis=0))
        return J, K

    def combined(self, z) -> np.ndarray:
        J, K = self.jk(z)
        return J / K

    def losses(self, z) -> np.ndarray:
        """Per-domain expected losses ``L(D_k, h_z)``."""
        h = self.combined(z)
        if self.model == "R":
            return ((h[:, None] - self.Y) ** 2 * self.P).sum(axis=(1, 2))
        on = self.P > 0
        if np.any(on & (h[None] <= 0)):
            raise NonpositiveJz("combined predictor is zero on a source support point")
        with np.errstate(divide="ignore"):
            nl = -np.log(h)
        return np.where(on, self.P * nl[None], 0.0).sum(axis=(1, 2))


def eval_jz_kz(problem: DcProblem, z, point=None):
    """``(J_z, K_z)`` tables, or their values at ``point`` (``x`` or ``(x, y)``)."""
    J, K = problem.jk(SimplexVector.coerce(z).weights)
    if point is None:
        return J, K
    return float(J[point]), float(K[point])


class DcEval(NamedTuple):
    u: np.ndarray       # (p,)
    v: np.ndarray       # (p,)
    grad_u: np.ndarray  # (p, p), row k is the gradient of u_k
    grad_v: np.ndarray  # (p, p)
    losses: np.ndarray  # (p,)


class DcDecomposition:
    """Evaluators for the convex pairs ``(u_k, v_k)`` and their gradients."""

    def __init__(self, problem: DcProblem):
        self.problem = problem
        pr = problem
        if pr.model == "R":
            # weight of cell (x, y) in u_k: (D_k(x) + eta U) D_k(y|x)
            self._Wu = pr.P + pr.eta * pr.U * pr.C
            if pr.curvature == "uniform":
                self._logw = 2.0 * pr.loss.M * (pr.Dm + pr.eta * pr.U)  # (p, n_x)
            else:
                self._logw = 2.0 * (self._Wu * pr.Mxy).sum(axis=2)
        else:
            self._Wu = pr.P + pr.eta * pr.U

    def evaluate(self, z, need_v: bool = True) -> DcEval:
        z = np.asarray(z, dtype=float)
        if self.problem.model == "R":
            return self._eval_squared(z, need_v)
        return self._eval_xent(z, need_v)

    def _eval_squared(self, z, need_v):
        pr = self.problem
        J, K = pr.jk(z)
        h = J / K
        R = h[:, None] - pr.Y
        R2 = R * R
        logK = np.log(K)
        G = pr.Dm * (pr.H - h) / K                      # dh/dz_j, (p, n_x)
        DK = pr.Dm / K                                  # d log K / dz_j
        Wu = self._Wu
        log_term = self._logw @ logK                    # (p,)
        log_grad = self._logw @ DK.T                    # (p, p)
        Lk = (pr.P * R2).sum(axis=(1, 2))
        u = (Wu * R2).sum(axis=(1, 2)) - log_term
        grad_u = (Wu * (2 * R)).sum(axis=2) @ G.T - log_grad
        if not need_v:
            return DcEval(u, None, grad_u, None, Lk)
        Pz = np.tensordot(z, pr.P, axes=1)
        Wv = Pz[None] + pr.eta * pr.U * pr.C            # (p, n_x, n_y)
        v = (Wv * R2).sum(axis=(1, 2)) - log_term
        grad_v = Lk[None, :] + (Wv * (2 * R)).sum(axis=2) @ G.T - log_grad
        return DcEval(u, v, grad_u, grad_v, Lk)

    def _eval_xent(self, z, need_v):
        pr = self.problem
        J, K = pr.jk(z)
        if np.any(J <= 0):
            raise NonpositiveJz("J_z vanishes at a cell with positive weight")
        logJ, logK = np.log(J), np.log(K)
        W = self._Wu                                    # (p, n_x, n_y)
        PH = pr.P * pr.H
        u = -(W * logJ).sum(axis=(1, 2))
        grad_u = -np.einsum("kxy,jxy->kj", W / J, PH)
        lr = logK - logJ
        Lk = (pr.P * lr).sum(axis=(1, 2))
        if not need_v:
            return DcEval(u, None, grad_u, None, Lk)
        v = (K * lr).sum() - (W * logK).sum(axis=(1, 2))
        common = (pr.P * (lr + 1.0)).sum(axis=(1, 2)) - (PH * (K / J)).sum(axis=(1, 2))
        grad_v = common[None, :] - np.einsum("kxy,jxy->kj", W / K, pr.P)
        return DcEval(u, v, grad_u, grad_v, Lk)

    def uv(self, k: int, z) -> tuple[float, float]:
        ev = self.evaluate(z)
        return float(ev.u[k]), float(ev.v[k])


def uv_squared(problem: DcProblem, k: int, z) -> tuple[float, float]:
    if problem.model != "R":
        raise ValidationError("uv_squared applies to the regression model")
    return DcDecomposition(problem).uv(k, SimplexVector.coerce(z).weights)


def uv_crossentropy(problem: DcProblem, k: int, z) -> tuple[float, float]:
    if problem.model != "P":
        raise ValidationError("uv_crossentropy applies to the probability model")
    return DcDecomposition(problem).uv(k, SimplexVector.coerce(z).weights)


def grad_v(problem: DcProblem, k: int, z) -> np.ndarray:
    return DcDecomposition(problem).evaluate(np.asarray(z, dtype=float)).grad_v[k].copy()


def objective(problem: DcProblem, z) -> tuple[float, int]:
    """``gamma = max_k L(D_k, h_z) - sum_j z_j L(D_j, h_z)`` and its argmax."""
    z = np.asarray(z, dtype=float)
    Lk = problem.losses(z)
    slack = Lk - z @ Lk
    k = int(np.argmax(slack))  # first maximizer wins ties
    return float(slack[k]), k


@dataclass(frozen=True)
class SolverConfig:
    eta: float = 1e-3
    eta_prime: float = 1e-4
    outer_max_iters: int = 100
    outer_tol: float = 1e-9
    inner_max_iters: int = 2000
    inner_tol: float = 1e-10
    step_scale: float = 1.0
    polish: bool = True
    boost: bool = True
    curvature: str = "pointwise"
    restarts: int = 0
    seed: int = 0
    z0: object = "uniform"

    def __post_init__(self):
        for name in ("eta", "eta_prime", "outer_tol", "inner_tol", "step_scale"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.outer_max_iters < 1 or self.inner_max_iters < 1 or self.restarts < 0:
            raise ValidationError("iteration counts must be positive")

    def initial_point(self, p: int) -> np.ndarray:
        if isinstance(self.z0, str):
            if self.z0 != "uniform":
                raise ValidationError(f"unknown z0 {self.z0!r}")
            return np.full(p, 1.0 / p)
        z0 = SimplexVector.coerce(self.z0).weights
        if z0.size != p:
            raise ShapeMismatch(f"z0 has {z0.size} entries for {p} sources")
        return z0.copy()


@dataclass
class IterRecord:
    iteration: int
    z: np.ndarray
    gamma: float
    losses: np.ndarray
    surrogate: float = float("nan")   # Phi_t at the accepted point
    touch_gap: float = 0.0            # |Phi_t(z_t) - gamma(z_t)|


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    certificate: str | None = None
    stop_reason: str | None = None
    restart: int = 0

    @property
    def gammas(self) -> np.ndarray:
        return np.array([r.gamma for r in self.records])


@dataclass
class SolveResult:
    z: np.ndarray
    gamma: float
    trace: SolveTrace
    certificate: str
    restarts: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.z, self.gamma, self.trace))


def _simplex_clean(z):
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    return z / z.sum()


def _surrogate(dec: DcDecomposition, z_t, ev_t: DcEval) -> Callable:
    v_t, gv_t = ev_t.v, ev_t.grad_v

    def phi(z):
        ev = dec.evaluate(z, need_v=False)
        vals = ev.u - v_t - gv_t @ (z - z_t)
        return vals, ev.grad_u - gv_t
    return phi


def _mirror_descent(phi, z_t, config: SolverConfig):
    vals, grads = phi(z_t)
    k = int(np.argmax(vals))
    best_z, best = z_t, float(vals[k])
    g = grads[k] - grads[k].mean()
    gnorm = np.max(np.abs(g))
    if gnorm <= 0:
        return best_z, best
    c = config.step_scale / gnorm
    z = z_t.copy()
    for t in range(1, config.inner_max_iters + 1):
        step = c / np.sqrt(t)
        w = np.log(np.maximum(z, 1e-300)) - step * g
        w = np.exp(w - w.max())
        z = w / w.sum()
        vals, grads = phi(z)
        k = int(np.argmax(vals))
        if vals[k] < best:
            best_z, best = z, float(vals[k])
        g = grads[k] - grads[k].mean()
        if step * np.max(np.abs(g)) < config.inner_tol:
            break
    return best_z, best


def _slsqp_polish(phi, z_start, gamma_start, scale):
    """Epigraph form ``min g s.t. phi_k(z) <= g`` with SLSQP, rescaled."""
    p = z_start.size
    x0 = np.append(z_start, gamma_start / scale)

    def cons(x):
        return x[p] - phi(x[:p])[0] / scale

    def cons_jac(x):
        jac = np.empty((p, p + 1))
        jac[:, :p] = -phi(x[:p])[1] / scale
        jac[:, p] = 1.0
        return jac

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(lambda x: x[p], x0, jac=lambda x: np.eye(p + 1)[p], method="SLSQP",
                       bounds=[(0.0, 1.0)] * p + [(None, None)],
                       constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac},
                                    {"type": "eq", "fun": lambda x: x[:p].sum() - 1.0,
                                     "jac": lambda x: np.append(np.ones(p), 0.0)}],
                       options={"maxiter": 200, "ftol": 1e-15})
    z = _simplex_clean(res.x[:p])
    return z, float(np.max(phi(z)[0]))


def inner_solve(problem: DcProblem, decomposition: DcDecomposition, z_t, config: SolverConfig,
                ev_t: DcEval | None = None) -> np.ndarray:
    """Approximately minimize ``Phi_t(z) = max_k u_k(z) - v_k(z_t) - <grad v_k(z_t), z - z_t>``.

    Entropic mirror descent with steps ``c / sqrt(t)`` (``c`` set from the
    first subgradient), best iterate kept, then an SLSQP polish.  The result
    never has a larger surrogate value than ``z_t``.
    """
    z_t = SimplexVector.coerce(z_t).weights.copy()
    if problem.p == 1:
        return z_t
    if ev_t is None:
        ev_t = decomposition.evaluate(z_t)
    phi = _surrogate(decomposition, z_t, ev_t)
    start = float(np.max(phi(z_t)[0]))
    z_best, best = _mirror_descent(phi, z_t, config)
    if config.polish:
        scale = max(np.abs(ev_t.losses).max(), np.abs(ev_t.grad_v).max() * 1e-3, 1e-300)
        try:
            z_pol, val = _slsqp_polish(phi, z_best, best, scale)
            if val < best:
                z_best, best = z_pol, val
        except (ValueError, FloatingPointError, NonpositiveJz):
            pass
    if not best < start:
        raise InnerStall("no point improves the convex surrogate")
    return z_best


def _certificate(gamma, threshold):
    return optimality_certificate(gamma, threshold)


def _boost(problem: DcProblem, z_prev, z_new, gamma_new, max_doublings: int = 30):
    """Extrapolate along ``d = z_new - z_prev`` while the true objective
    keeps falling (doubling steps, clipped to the simplex)."""
    d = z_new - z_prev
    neg = d < 0
    if not neg.any():
        return z_new, gamma_new, 0.0
    lam_max = float(np.min(z_new[neg] / -d[neg]))
    best_z, best, best_lam = z_new, gamma_new, 0.0
    lam = 1.0
    for _ in range(max_doublings):
        lam_try = min(lam, lam_max)
        if lam_try <= 0:
            break
        cand = _simplex_clean(z_new + lam_try * d)
        g, _ = objective(problem, cand)
        if not g < best:
            break
        best_z, best, best_lam = cand, g, lam_try
        if lam_try >= lam_max:
            break
        lam *= 2.0
    return best_z, best, best_lam


def _single_run(problem: DcProblem, config: SolverConfig, z0: np.ndarray, restart: int = 0) -> SolveResult:
    dec = DcDecomposition(problem)
    trace = SolveTrace(restart=restart)
    z = _simplex_clean(z0)
    gamma, _ = objective(problem, z)
    trace.records.append(IterRecord(0, z.copy(), gamma, problem.losses(z)))
    threshold = 1e-3 * problem.loss.M
    if problem.p == 1:
        trace.stop_reason = "single_source"
    for t in range(1, config.outer_max_iters + 1):
        if problem.p == 1:
            break
        if gamma <= 1e-12:
            trace.stop_reason = "gamma_zero"
            break
        ev_t = dec.evaluate(z)
        touch = float(np.max(ev_t.u - ev_t.v)) - gamma
        try:
            z_new = inner_solve(problem, dec, z, config, ev_t=ev_t)
        except InnerStall:
            trace.stop_reason = "inner_stall"
            break
        gamma_new, _ = objective(problem, z_new)
        ev_new = dec.evaluate(z_new, need_v=False)
        surrogate = float(np.max(ev_new.u - ev_t.v - ev_t.grad_v @ (z_new - z)))
        if surrogate < gamma_new - 1e-9 * max(1.0, abs(gamma_new)):
            log.warning("majorization violated at iteration %d: %g < %g", t, surrogate, gamma_new)
        if gamma_new > gamma:
            trace.stop_reason = "no_descent"
            break
        if config.boost:
            z_new, gamma_new, _ = _boost(problem, z, z_new, gamma_new)
            ev_new = dec.evaluate(z_new, need_v=False)
        decrease = gamma - gamma_new
        z, gamma = z_new, gamma_new
        trace.records.append(IterRecord(t, z.copy(), gamma, ev_new.losses, surrogate, abs(touch)))
        if decrease <= config.outer_tol * gamma_new:
            trace.stop_reason = "relative_tol"
            break
    else:
        trace.stop_reason = "max_iters"
    cert = _certificate(gamma, threshold)
    trace.certificate = cert
    return SolveResult(z=z, gamma=gamma, trace=trace, certificate=cert)


def dca_solve(problem: DcProblem, config: SolverConfig | None = None) -> SolveResult:
    """Run the DC algorithm from ``config.z0`` plus ``config.restarts`` random
    Dirichlet(1) starts; the best final objective wins."""
    config = config or SolverConfig()
    if config.eta != problem.eta or config.curvature != problem.curvature:
        problem = DcProblem(problem.sources, problem.hypotheses, problem.loss, config.eta,
                            labels=problem.Y, curvature=config.curvature)
    best = _single_run(problem, config, config.initial_point(problem.p))
    runs = [best]
    rng = np.random.default_rng(config.seed)
    for r in range(1, config.restarts + 1):
        z0 = rng.dirichlet(np.ones(problem.p))
        res = _single_run(problem, config, z0, restart=r)
        runs.append(res)
        if res.gamma < best.gamma:
            best = res
    best.restarts = runs
    return best


# -- fixed-point map and balance diagnostics ------------------------------

@dataclass
class FixedPointResult:
    z: np.ndarray
    residual: float
    iterations: int
    converged: bool

    def __iter__(self):
        return iter((self.z, self.residual))


def fixed_point_map(problem: DcProblem, z, eta_prime: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    Lk = problem.losses(z)
    return (z * Lk + eta_prime / problem.p) / (z @ Lk + eta_prime)


def fixed_point_iterate(problem: DcProblem, z0, eta_prime: float, max_iters: int = 10_000,
                        tol: float = 1e-12, strict: bool = False) -> FixedPointResult:
    """Plain iteration of the balancing map; convergence is not guaranteed.

    On failure the best iterate is returned (``converged=False``) unless
    ``strict`` is set, in which case ``NoConvergence`` carries it.
    """
    if not eta_prime > 0:
        raise ValidationError("eta_prime must be positive")
    z = SimplexVector.coerce(z0).weights.copy()
    best = FixedPointResult(z, np.inf, 0, False)
    for it in range(1, max_iters + 1):
        z_next = fixed_point_map(problem, z, eta_prime)
        res = float(np.max(np.abs(z_next - z)))
        if res < best.residual:
            best = FixedPointResult(z, res, it, res <= tol)
        if res <= tol:
            return FixedPointResult(z, res, it, True)
        z = z_next
    if strict:
        raise NoConvergence(f"no fixed point within {max_iters} iterations", best)
    return best


@dataclass(frozen=True)
class BalanceReport:
    slacks: np.ndarray
    losses: np.ndarray
    eta_prime: float

    @property
    def max_slack(self) -> float:
        return float(np.max(self.slacks))

    @property
    def passed(self) -> bool:
        return self.max_slack <= self.eta_prime


def check_balance(problem: DcProblem, z, eta_prime: float) -> BalanceReport:
    z = SimplexVector.coerce(z).weights
    Lk = problem.losses(z)
    return BalanceReport(slacks=Lk - z @ Lk, losses=Lk, eta_prime=eta_prime)


def optimality_certificate(gamma_star: float, threshold: float) -> str:
    if gamma_star < -1e-12:
        raise SolverError(f"negative objective {gamma_star}; the min-max value is nonnegative")
    return GLOBAL_PLAUSIBLE if gamma_star <= threshold else LOCAL_ONLY
