"""Haar-averaged two-site replica channel and the power-law pair distribution.

Site indices are 0-based throughout the package.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .charges import TWO_SITE
from .replica import (BASIS, CROSSED, EFF_DIM, PARALLEL, two_site_operator_to_site_major,
                      two_site_to_site_major)


class InvalidSectorError(ValueError):
    pass


@dataclass(frozen=True)
class InvariantVector:
    sign: str
    q1: int
    q2: int
    coords: np.ndarray  # 256 components, leg-major layout


def build_invariant_vector(sign, q1, q2):
    """Sum over sector bases of ``|x1 x1 x2 x2>>`` (parallel) or ``|x1 x2 x2 x1>>`` (crossed)."""
    sectors = TWO_SITE.basis_index_map
    if q1 not in sectors or q2 not in sectors:
        raise InvalidSectorError(f"two-site charges must be in -1, 0, 1; got {q1}, {q2}")
    v = np.zeros(256)
    for x1 in sectors[q1]:
        for x2 in sectors[q2]:
            legs = (x1, x1, x2, x2) if sign == PARALLEL else (x1, x2, x2, x1)
            v[64 * legs[0] + 16 * legs[1] + 4 * legs[2] + legs[3]] += 1.0
    return InvariantVector(sign, q1, q2, v)


def weingarten_terms():
    """List of (coefficient, ket InvariantVector, bra InvariantVector) making up T."""
    dims = TWO_SITE.dims
    terms = []
    for q1 in TWO_SITE.labels:
        for q2 in TWO_SITE.labels:
            if q1 == q2:
                continue
            c = 1.0 / (dims[q1] * dims[q2])
            for s in (PARALLEL, CROSSED):
                v = build_invariant_vector(s, q1, q2)
                terms.append((c, v, v))
    for q in TWO_SITE.labels:
        d = dims[q]
        plus = build_invariant_vector(PARALLEL, q, q)
        minus = build_invariant_vector(CROSSED, q, q)
        if d == 1:
            # the two pairings coincide; a pure phase squared in modulus averages to one
            terms.append((1.0, plus, plus))
            continue
        wg_id = 1.0 / (d * d - 1)
        wg_swap = -1.0 / (d * (d * d - 1))
        terms += [(wg_id, plus, plus), (wg_id, minus, minus),
                  (wg_swap, plus, minus), (wg_swap, minus, plus)]
    return terms


@dataclass(frozen=True)
class AveragedChannel:
    two_site_tensor: np.ndarray   # 36x36 in the |mu> (x) |mu'> basis
    full: np.ndarray = field(repr=False)  # 256x256, site-major four-leg layout
    support: tuple = None

    def at(self, i, j):
        return AveragedChannel(self.two_site_tensor, self.full, (i, j))


def effective_embedding2():
    return np.kron(BASIS.embedding, BASIS.embedding)


@lru_cache(maxsize=None)
def build_averaged_two_site_channel():
    t = np.zeros((256, 256))
    for c, ket, bra in weingarten_terms():
        t += c * np.outer(ket.coords, bra.coords)
    full = two_site_operator_to_site_major(t)
    e2 = effective_embedding2()
    eff = e2.T @ full @ e2
    eff.setflags(write=False)
    full.setflags(write=False)
    return AveragedChannel(eff, full)


@lru_cache(maxsize=None)
def swap_operator():
    """Exchange of the two sites on the 36-dimensional effective pair space."""
    p = np.zeros((EFF_DIM ** 2, EFF_DIM ** 2))
    for a in range(EFF_DIM):
        for b in range(EFF_DIM):
            p[b * EFF_DIM + a, a * EFF_DIM + b] = 1.0
    p.setflags(write=False)
    return p


def replicated_gate(u):
    """``(U (x) U*)^(x)2`` on two sites, site-major four-leg layout (256x256)."""
    g = np.kron(np.kron(u, u.conj()), np.kron(u, u.conj()))
    return two_site_operator_to_site_major(g)


def sample_replicated_average(samples, rng, batch=4096):
    """Empirical mean of ``(U (x) U*)^(x)2`` over block-Haar gates (256x256, site-major)."""
    from .ed import sample_block_haar_gate

    acc = np.zeros((256, 256), dtype=complex)
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        us = np.array([sample_block_haar_gate(rng).matrix() for _ in range(b)])
        a = np.einsum("bij,bkl->bikjl", us, us.conj()).reshape(b, 256)
        # (a^T a)[(i k j l), (i' k' j' l')] -> leg-major (i k i' k'), (j l j' l')
        acc += a.T @ a
        done += b
    g = (acc / samples).reshape((4,) * 8)
    g = g.transpose(0, 1, 4, 5, 2, 3, 6, 7).reshape(256, 256)
    return two_site_operator_to_site_major(g)


def monte_carlo_channel_check(samples, seed=None):
    """Max entry deviation between the empirical gate average and T, in effective coordinates."""
    rng = np.random.default_rng(seed)
    e2 = effective_embedding2()
    emp = e2.T @ sample_replicated_average(samples, rng) @ e2
    return float(np.max(np.abs(emp - build_averaged_two_site_channel().two_site_tensor)))


@dataclass(frozen=True)
class PairDistribution:
    alpha: float
    n_sites: int

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    @property
    def distances(self):
        return np.arange(1, self.n_sites)

    @property
    def probs(self):
        r = self.distances.astype(float)
        # log-space keeps huge alpha from underflowing to 0/0
        logw = -self.alpha * np.log(r)
        w = np.exp(logw - logw.max())
        return w / w.sum()

    def pair_probs(self):
        """Probability of every pair ``(i, j)`` with ``i < j``."""
        p = self.probs
        return {(i, i + r): p[r - 1] / (self.n_sites - r)
                for r in self.distances for i in range(self.n_sites - r)}


def sample_layer_pairs(dist, rng, n_gates=None):
    """Draw ``n_gates`` (default ``n_sites``) pairs i.i.d.; list order is application order."""
    n = dist.n_sites
    n_gates = n if n_gates is None else n_gates
    r = rng.choice(dist.distances, size=n_gates, p=dist.probs)
    i = np.floor(rng.random(n_gates) * (n - r)).astype(int)
    return [(int(a), int(a + b)) for a, b in zip(i, r)]
