"""How far a target sits from the source family, and what that costs.

For a target outside the mixture family the guarantee degrades with the
Rényi divergence to the closest mixture.
"""
import numpy as np

from dwmix import DiscreteJointDistribution, mixture
from dwmix.domain import guarantee_bound, renyi_d_alpha
from dwmix.oracle import renyi_to_mixture_family

rng = np.random.default_rng(0)
sources = [DiscreteJointDistribution(rng.dirichlet(np.ones(12)).reshape(4, 3)) for _ in range(3)]
inside = mixture([0.2, 0.5, 0.3], sources)
noise = DiscreteJointDistribution(rng.dirichlet(np.ones(12)).reshape(4, 3))

for t in (0.0, 0.1, 0.3, 0.6):
    target = DiscreteJointDistribution((1 - t) * inside.probs + t * noise.probs)
    lam, d = renyi_to_mixture_family(target, sources, alpha=2.0)
    bound = guarantee_bound(epsilon=0.05, delta=0.01, d_alpha=d, M=1.0, alpha=2.0)
    print(f"noise {t:.1f}: closest lambda={np.round(lam.weights, 2)} d_2={d:.3f} bound={bound:.3f}")

print("d_alpha of a fixed pair is nondecreasing in alpha:",
      [round(renyi_d_alpha(noise, inside, a), 3) for a in (1.5, 2, 5, 10, 50)])
