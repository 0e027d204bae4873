"""Dense 6^N reference evolution in the effective replica space (small N only)."""

import numpy as np

from .replica import EFF_DIM


def product_vector(site_vectors):
    v = np.ones(1)
    for s in site_vectors:
        v = np.kron(v, s)
    return v


def apply_pair(v, op, i, j, n):
    """Apply a 36x36 operator to sites ``(i, j)`` of a dense 6^n vector; ``i`` is the first factor."""
    t = v.reshape((EFF_DIM,) * n)
    t = np.moveaxis(t, (i, j), (0, 1)).reshape(EFF_DIM ** 2, -1)
    t = (op @ t).reshape((EFF_DIM, EFF_DIM) + (EFF_DIM,) * (n - 2))
    return np.moveaxis(t, (0, 1), (i, j)).reshape(-1)


def averaged_gate_channel_apply(v, dist, channel):
    """One gate slot of the pair-averaged channel: sum over pairs of p(i, j) T_ij."""
    op = getattr(channel, "two_site_tensor", channel)
    n = dist.n_sites
    out = np.zeros_like(v)
    for (i, j), p in dist.pair_probs().items():
        out += p * apply_pair(v, op, i, j, n)
    return out


def overlap_product(v, covectors):
    t = v
    for f in covectors[::-1]:
        t = t.reshape(-1, EFF_DIM) @ f
    return t[0]
