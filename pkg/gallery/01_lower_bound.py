"""Why a fixed convex combination of source predictors is not enough.

Two domains, each with a perfect predictor.  Any convex combination of the
two has worst-case squared loss 1/4 on some mixture of the domains, while
the distribution-weighted combination is close to zero everywhere.
"""
import numpy as np

from dwmix import SimplexVector, dca_solve, lower_bound_regression_instance, robustness_sweep
from dwmix.checks import convex_minmax
from dwmix.dc import SolverConfig
from dwmix.oracle import GridSpec

sc = lower_bound_regression_instance()
alpha, value = convex_minmax(sc, GridSpec(2, 1e-3))
print(f"best convex combination alpha={alpha.weights.round(3)} worst-case loss={value:.6f}")

eta = 0.01
res = dca_solve(sc.problem(eta), SolverConfig(eta=eta))
print(f"DC solver: z={np.round(res.z, 4)} gamma={res.gamma:.3g} ({res.certificate})")

table = robustness_sweep(sc, res.z, eta)
worst = table.worst()
print(f"worst loss over the mixture grid: dw={worst['dw']:.2e} uniform={worst['unif']:.3f}"
      f" best convex={worst['best_convex']:.3f}")
print(f"uniform z gives dw={robustness_sweep(sc, SimplexVector.uniform(2), eta).worst()['dw']:.2e}")
