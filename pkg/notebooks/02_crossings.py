"""Crossing of asymmetry curves for two tilts, as a function of gate range.

Boundary-picture network at N=16, N_A=2; a few realizations, so curves are
noisy but the ordering of crossing times is already visible.
Run: python3 notebooks/02_crossings.py   (a few minutes)
"""

import numpy as np

from u1mpemba import PairDistribution, InitialStateSpec, TruncationPolicy, find_mpemba_time
from u1mpemba.asymmetry import AsymmetryTrace
from u1mpemba.runner import realization_rng
from u1mpemba.trajectories import boundary_realization

n, n_a, layers, reps = 16, 2, 25, 6
policy = TruncationPolicy(1e-12, 24)
thetas = (0.3 * np.pi, 0.4 * np.pi)

for family in ("tfs", "tns"):
    for alpha in (1.5, 5.0):
        specs = [InitialStateSpec(family, th, n) for th in thetas]
        acc = {s: ([], []) for s in specs}
        for r in range(reps):
            res, _ = boundary_realization(specs, PairDistribution(alpha, n), layers, n_a, policy,
                                          realization_rng(0, "sampled", alpha, n, r),
                                          route="permute")
            for s in specs:
                acc[s][0].append(res[s][0])
                acc[s][1].append(res[s][1])
        small, large = (AsymmetryTrace.from_samples({}, *acc[s]) for s in specs)
        hit = find_mpemba_time(small, large)
        t_m = "none" if hit.t_M is None else f"{hit.t_M:.2f}"
        print(f"{family} alpha={alpha:<4g} t_M={t_m:>6}   dS(t=10): "
              f"{small.asymmetry[10]:.4f} vs {large.asymmetry[10]:.4f}")
