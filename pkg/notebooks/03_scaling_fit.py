"""Power-law fit of crossing time against subsystem size.

Uses the crossing table written by the N=32 acceptance sweep if it exists
(``results/scaling_n32``), otherwise a synthetic table with 1% noise.
Run: python3 notebooks/03_scaling_fit.py
"""

import csv
from pathlib import Path

import numpy as np

from u1mpemba import fit_power_law, z_theory

table = Path(__file__).resolve().parent.parent / "results" / "scaling_n32" / "crossings.csv"
groups = {}
if table.exists():
    for row in csv.DictReader(table.open()):
        if row["t_M"]:
            groups.setdefault(float(row["alpha"]), []).append((int(row["n_a"]), float(row["t_M"]), None))
else:
    rng = np.random.default_rng(0)
    for alpha in (1.5, 5.0):
        z = z_theory(alpha)
        groups[alpha] = [(k, (3 * (k - 1) ** z + 2) * (1 + 0.01 * rng.normal()), None)
                         for k in range(3, 11)]

for alpha, pts in sorted(groups.items()):
    print(f"alpha={alpha:g}: " + ", ".join(f"N_A={k} t_M={t:.2f}" for k, t, _ in sorted(pts)))
    try:
        fit = fit_power_law(pts, alpha=alpha)
    except Exception as exc:
        print("  fit failed:", exc)
        continue
    print(f"  z = {fit.z:.2f} +- {fit.z_stderr:.2f}   (min(alpha-1, 2) = {z_theory(alpha):g})")
