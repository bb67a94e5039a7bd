"""Two Gaussian-mixture regression domains with least-squares experts.

The solver starts from uniform weights and reaches the near-zero objective
that certifies a global solution.  The trace shows the monotone descent.
"""
from dwmix import builtin, dca_solve
from dwmix.dc import SolverConfig

sc = builtin("gauss-reg", seed=0)
print(f"{sc.name}: {sc.p} domains, {sc.n_x} pooled evaluation points, M={sc.loss.M:.3f}")

res = dca_solve(sc.problem(1e-3), SolverConfig(outer_max_iters=50))
for rec in res.trace.records:
    losses = ", ".join(f"{v:.4f}" for v in rec.losses)
    print(f"iter {rec.iteration:2d}  gamma={rec.gamma:.3e}  losses=[{losses}]")
print(f"stop: {res.trace.stop_reason}; certificate: {res.certificate}")
