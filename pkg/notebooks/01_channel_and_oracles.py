"""Averaged two-site channel and the small-N cross-checks behind the network.

Run: python3 notebooks/01_channel_and_oracles.py   (about half a minute)
"""

import numpy as np

from u1mpemba import (AsymmetryTrace, InitialStateSpec, PairDistribution, TruncationPolicy,
                      build_averaged_two_site_channel, monte_carlo_channel_check)
from u1mpemba.ed import run_ed
from u1mpemba.trajectories import forward_realization

T = build_averaged_two_site_channel()
ev = np.sort(np.linalg.eigvalsh(T.two_site_tensor))[::-1]
print("channel on K_eff x K_eff:", T.two_site_tensor.shape)
print("leading eigenvalues:", np.round(ev[:6], 4))
print("rank (projector count):", int(np.sum(np.abs(ev) > 1e-12)))

# empirical gate average converges like 1/sqrt(samples)
for n in (100, 1_000, 10_000):
    print(f"  {n:>7d} Haar gates: max deviation {monte_carlo_channel_check(n, seed=1):.4f}")

# position-averaged asymmetry: replica network vs statevector Monte Carlo
n, n_a, layers, alpha = 8, 2, 12, 1.5
spec = InitialStateSpec("tfs", 0.3 * np.pi, n)
dist = PairDistribution(alpha, n)
policy = TruncationPolicy(1e-12, 64)
tn = [forward_realization(spec, dist, layers, [n_a], policy, np.random.default_rng(r))[0][n_a]
      for r in range(20)]
tn = AsymmetryTrace.from_samples({}, [a for a, _ in tn], [b for _, b in tn])
runs = run_ed(spec, dist, layers, 400, n_a, rng=5)
ed = AsymmetryTrace.from_samples({}, runs.purities, runs.dephased_purities)
print("\n t   network (20 circuits)   ED (400 circuits)")
for t in range(0, layers + 1, 2):
    print(f"{t:2d}  {tn.asymmetry[t]:.4f} +- {tn.stderr[t]:.4f}    "
          f"{ed.asymmetry[t]:.4f} +- {ed.stderr[t]:.4f}")
