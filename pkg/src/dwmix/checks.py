"""Numerical checks tying the solver to the independent oracles.

Each check returns a :class:`CheckResult`; the command-line ``oracle``
command and the test-suite both run them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dc import DcDecomposition, DcProblem, check_balance, objective
from .domain import mixture
from .oracle import (GridSpec, brute_force_minmax, convexity_probe, finite_diff_directional,
                     grid_points, grid_values, lipschitz_estimate)
from .predictors import convex_combination

IDENTITY_TOL = 1e-10
CONVEXITY_TOL = 1e-10
GRADIENT_TOL = 1e-5
BALANCE_SLACK = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: worst={self.worst:.3g} tol={self.tol:.3g}"


def interior_sampler(p: int, margin: float = 0.1) -> Callable:
    """Dirichlet(1) draws pulled toward the barycentre by ``margin``."""
    def draw(rng):
        return (1 - margin) * rng.dirichlet(np.ones(p)) + margin / p
    return draw


def decomposition_identity(problem: DcProblem, trials: int = 100, seed: int = 0) -> CheckResult:
    """``u_k - v_k`` against ``L(D_k, h_z) - L(D_z, h_z)`` at random ``(k, z)``."""
    dec = DcDecomposition(problem)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        z = rng.dirichlet(np.ones(problem.p))
        k = int(rng.integers(problem.p))
        ev = dec.evaluate(z)
        Lk = problem.losses(z)
        worst = max(worst, abs((ev.u[k] - ev.v[k]) - (Lk[k] - z @ Lk)))
    return CheckResult("decomposition", worst <= IDENTITY_TOL, worst, IDENTITY_TOL)


def convexity(problem: DcProblem, trials: int = 200, seed: int = 0) -> CheckResult:
    """Midpoint probes of every ``u_k`` and ``v_k``."""
    dec = DcDecomposition(problem)
    worst, per = -np.inf, {}
    for k in range(problem.p):
        for part in ("u", "v"):
            f = (lambda z, k=k, part=part: getattr(dec.evaluate(z), part)[k])
            res = convexity_probe(f, trials=trials, p=problem.p, seed=seed + k)
            per[f"{part}_{k + 1}"] = res.worst_violation
            worst = max(worst, res.worst_violation)
    return CheckResult("convexity", worst <= CONVEXITY_TOL, float(worst), CONVEXITY_TOL, per)


def gradient(problem: DcProblem, trials: int = 50, seed: int = 0, step: float = 1e-6,
             grad_fn: Callable | None = None) -> CheckResult:
    """Analytic gradients of ``u_k`` and ``v_k`` against central differences
    along random zero-sum directions.

    The error is relative to ``max(|fd|, |grad| * |d|)``.  ``grad_fn(z)``
    may replace the analytic ``(grad_u, grad_v)`` pair (used to confirm the
    check catches a broken gradient).
    """
    dec = DcDecomposition(problem)
    if grad_fn is None:
        def grad_fn(z):
            ev = dec.evaluate(z)
            return ev.grad_u, ev.grad_v
    rng = np.random.default_rng(seed)
    draw = interior_sampler(problem.p)
    worst = {"u": 0.0, "v": 0.0}
    for _ in range(trials):
        z = draw(rng)
        d = rng.standard_normal(problem.p)
        d -= d.mean()
        d /= np.linalg.norm(d)
        s = min(step, 0.5 * z.min() / np.abs(d).max())
        gu, gv = grad_fn(z)
        for part, G in (("u", gu), ("v", gv)):
            for k in range(problem.p):
                fd = finite_diff_directional(lambda w: getattr(dec.evaluate(w), part)[k], z, d, s)
                an = float(G[k] @ d)
                scale = max(abs(fd), np.linalg.norm(G[k]), 1e-12)
                worst[part] = max(worst[part], abs(an - fd) / scale)
    top = max(worst.values())
    return CheckResult("gradient", top <= GRADIENT_TOL, top, GRADIENT_TOL, worst)


def grid_equivalence(problem: DcProblem, gamma_dca: float, spec: GridSpec | None = None) -> CheckResult:
    """DCA objective against the grid minimum of the same objective.

    Passes when ``gamma_dca <= gamma_grid + 1e-9`` and the two differ by at
    most ``L * resolution * sqrt(p)`` with ``L`` the grid Lipschitz estimate.
    """
    spec = spec or GridSpec.default(problem.p)
    f = lambda z: objective(problem, z)[0]  # noqa: E731
    counts, vals = grid_values(f, spec)
    i = int(np.argmin(vals))
    g_grid = float(vals[i])
    lip = lipschitz_estimate(counts, vals, spec.divisions) if problem.p > 1 else 0.0
    band = lip * spec.resolution * np.sqrt(problem.p)
    gap = abs(gamma_dca - g_grid)
    ok = gamma_dca <= g_grid + 1e-9 and gap <= band
    return CheckResult("grid_minmax", bool(ok), gap, band,
                       {"gamma_grid": g_grid, "gamma_dca": gamma_dca, "z_grid": (counts[i] / spec.divisions).tolist(),
                        "lipschitz": lip, "resolution": spec.resolution})


def convex_minmax(scenario, spec: GridSpec | None = None):
    """``min_alpha max_k L(D_k, sum_j alpha_j h_j)`` over a simplex grid;
    returns ``(alpha, value)``."""
    spec = spec or GridSpec.default(scenario.p)

    def worst(alpha):
        g = convex_combination(alpha, scenario.hypotheses)
        return max(scenario.expected_loss(D, g) for D in scenario.sources)
    return brute_force_minmax(worst, spec)


def balance(problem: DcProblem, z, eta_prime: float) -> CheckResult:
    rep = check_balance(problem, z, eta_prime)
    tol = eta_prime + BALANCE_SLACK
    return CheckResult("balance", rep.max_slack <= tol, rep.max_slack, tol,
                       {"losses": rep.losses.tolist()})


def mixture_guarantee(problem: DcProblem, z, eta_prime: float, resolution: float = 0.1) -> CheckResult:
    """Worst loss of ``h_z`` over mixtures on a lambda grid, evaluated
    directly on each mixture, against the z-weighted source average."""
    z = np.asarray(z, dtype=float)
    h = problem.combined(z)
    if problem.model == "R":
        table = (h[:, None] - problem.Y) ** 2
    else:
        with np.errstate(divide="ignore"):
            table = -np.log(h)
    Lk = problem.losses(z)
    avg = float(z @ Lk)
    worst = -np.inf
    for lam in grid_points(GridSpec(problem.p, resolution)):
        D = mixture(lam, problem.sources).probs
        on = D > 0
        worst = max(worst, float(D[on] @ table[on]))
    slack = worst - avg
    tol = eta_prime + BALANCE_SLACK
    return CheckResult("mixture_guarantee", slack <= tol, slack, tol,
                       {"worst_mixture_loss": worst, "average": avg})
