"""Brute-force and numerical-check oracles.

Nothing here shares code with the solver path beyond calling the function
under test; these are the independent references used in the test-suite
and by ``dwmix oracle``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np

from .domain import SimplexVector, renyi_d_alpha, mixture
from .errors import GridTooLarge, InfeasibleProbe, SupportViolation, ValidationError

MAX_GRID = 10 ** 7

# resolution per simplex dimension; denominators divisible by p so the
# barycentre is on the grid
DEFAULT_RESOLUTION = {1: 1.0, 2: 1e-3, 3: 1 / 60, 4: 1 / 20}


@dataclass(frozen=True)
class GridSpec:
    p: int
    resolution: float

    def __post_init__(self):
        if self.p < 1:
            raise ValidationError("simplex dimension must be >= 1")
        if not 0 < self.resolution <= 1:
            raise ValidationError("resolution must lie in (0, 1]")
        n = 1.0 / self.resolution
        if abs(n - round(n)) > 1e-6 * n:
            raise ValidationError(f"1/resolution = {n} is not an integer")

    @classmethod
    def default(cls, p: int) -> "GridSpec":
        return cls(p, DEFAULT_RESOLUTION.get(p, 0.1))

    @property
    def divisions(self) -> int:
        return int(round(1.0 / self.resolution))

    @property
    def size(self) -> int:
        return comb(self.divisions + self.p - 1, self.p - 1)


def _compositions(n: int, p: int):
    if p == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, p - 1):
            yield (first,) + rest


def grid_counts(spec: GridSpec) -> np.ndarray:
    """Integer lattice coordinates ``(size, p)`` in lexicographic order."""
    if spec.size > MAX_GRID:
        raise GridTooLarge(f"grid has {spec.size} points (limit {MAX_GRID})")
    return np.array(list(_compositions(spec.divisions, spec.p)), dtype=np.int64).reshape(-1, spec.p)


def grid_points(spec: GridSpec) -> np.ndarray:
    return grid_counts(spec) / spec.divisions


def simplex_grid(spec: GridSpec) -> list[SimplexVector]:
    return [SimplexVector(z) for z in grid_points(spec)]


def brute_force_minmax(f: Callable[[np.ndarray], float], spec: GridSpec):
    """Exact minimum of ``f`` over the grid; the lexicographically smallest
    minimizer wins ties."""
    best_z, best = None, np.inf
    for z in grid_points(spec):
        val = f(z)
        if val < best:
            best_z, best = z, val
    return SimplexVector(best_z), float(best)


def grid_values(f: Callable, spec: GridSpec):
    counts = grid_counts(spec)
    vals = np.array([f(c / spec.divisions) for c in counts])
    return counts, vals


def lipschitz_estimate(counts: np.ndarray, vals: np.ndarray, divisions: int) -> float:
    """``max |f(a) - f(b)| / ||a - b||`` over grid neighbours ``b = a + (e_i - e_j)/n``."""
    index = {tuple(c): i for i, c in enumerate(counts)}
    p = counts.shape[1]
    step = np.sqrt(2.0) / divisions
    worst = 0.0
    for i, c in enumerate(counts):
        for a in range(p):
            if c[a] == 0:
                continue
            for b in range(p):
                if b == a:
                    continue
                nb = list(c)
                nb[a] -= 1
                nb[b] += 1
                j = index.get(tuple(nb))
                if j is not None and j > i:
                    worst = max(worst, abs(vals[j] - vals[i]) / step)
    return worst


def finite_diff_directional(f: Callable[[np.ndarray], float], z, direction, step: float = 1e-6) -> float:
    """Central difference of ``f`` along a simplex-feasible direction."""
    z = np.asarray(z, dtype=float)
    d = np.asarray(direction, dtype=float)
    if abs(d.sum()) > 1e-12:
        raise InfeasibleProbe("direction must sum to zero to stay on the simplex")
    plus, minus = z + step * d, z - step * d
    if plus.min() < 0 or minus.min() < 0:
        raise InfeasibleProbe("probe leaves the simplex; shrink the step or move inward")
    return (f(plus) - f(minus)) / (2 * step)


@dataclass(frozen=True)
class ProbeResult:
    passed: bool
    worst_violation: float
    trials: int


def convexity_probe(f: Callable[[np.ndarray], float], domain_sampler: Callable | None = None,
                    trials: int = 200, p: int | None = None, seed: int = 0,
                    tol: float = 1e-10) -> ProbeResult:
    """Midpoint test ``f((a+b)/2) <= (f(a)+f(b))/2 + tol`` on random pairs.

    ``worst_violation`` is the largest signed value of
    ``f(mid) - (f(a)+f(b))/2``.
    """
    if trials < 1:
        raise ValidationError("need at least one trial")
    rng = np.random.default_rng(seed)
    if domain_sampler is None:
        if p is None:
            raise ValidationError("give a sampler or the simplex dimension p")
        domain_sampler = lambda r: r.dirichlet(np.ones(p))  # noqa: E731
    worst = -np.inf
    for _ in range(trials):
        a, b = domain_sampler(rng), domain_sampler(rng)
        worst = max(worst, f((a + b) / 2) - 0.5 * (f(a) + f(b)))
    return ProbeResult(bool(worst <= tol), float(worst), trials)


def renyi_to_mixture_family(D, sources, alpha: float, spec: GridSpec | None = None):
    """Grid approximation of ``inf_lambda d_alpha(D || D_lambda)``.

    Returns ``(lambda, value)``; an upper bound on the true infimum.
    """
    spec = spec or GridSpec.default(len(sources))
    best_l, best = None, np.inf
    for lam in grid_points(spec):
        try:
            val = renyi_d_alpha(D, mixture(lam, sources), alpha)
        except SupportViolation:
            continue
        if val < best:
            best_l, best = lam, val
    if best_l is None:
        raise SupportViolation("no mixture on the grid covers the support of D")
    return SimplexVector(best_l), float(best)
