"""Swap and charge-dephased boundary vectors, annealed purities and Renyi-2 asymmetry.

The subsystem ``A`` is always the leftmost ``n_a`` sites of the chain.
"""

from dataclasses import dataclass, field

import numpy as np

from .charges import bit_charge2
from .replica import BASIS, swap_covector16, trace_covector16


class InvalidSubsystemError(ValueError):
    pass


def _restrict_covector(f16):
    # co-vectors act on effective states through the embedding
    return BASIS.embedding.T @ f16


def trace_site_covector():
    return _restrict_covector(trace_covector16())


def swap_site_covector():
    return _restrict_covector(swap_covector16())


def leg_phase16(phi):
    """Phases picked up by the four legs under ``X -> e^{-i phi Q} X e^{+i phi Q}`` on replica 1."""
    out = np.empty(16, dtype=complex)
    for idx in range(16):
        s1, s2 = (idx >> 3) & 1, (idx >> 2) & 1
        out[idx] = np.exp(-0.5j * phi * (bit_charge2(s1) - bit_charge2(s2)))
    return out


def dephased_site_covector(n_a, k):
    phi = 2 * np.pi * k / (n_a + 1)
    return _restrict_covector(swap_covector16() * leg_phase16(phi))


@dataclass(frozen=True)
class BoundaryVector:
    kind: str
    site_vectors: tuple
    n_a: int
    k: int = None

    @property
    def n_sites(self):
        return len(self.site_vectors)


def _check(n_sites, n_a):
    if not 1 <= n_a <= n_sites:
        raise InvalidSubsystemError(f"subsystem size {n_a} not in 1..{n_sites}")


def build_trace_boundary(n_sites):
    return BoundaryVector("trace", (trace_site_covector(),) * n_sites, 0)


def build_swap_boundary(n_sites, n_a):
    _check(n_sites, n_a)
    vecs = (swap_site_covector(),) * n_a + (trace_site_covector(),) * (n_sites - n_a)
    return BoundaryVector("swap", vecs, n_a)


def build_dephased_boundary(n_sites, n_a, k):
    _check(n_sites, n_a)
    if not 0 <= k <= n_a:
        raise ValueError(f"Fourier index {k} not in 0..{n_a}")
    vecs = (dephased_site_covector(n_a, k),) * n_a + (trace_site_covector(),) * (n_sites - n_a)
    return BoundaryVector("dephased_swap", vecs, n_a, k)


def dephased_family(n_sites, n_a):
    return [build_dephased_boundary(n_sites, n_a, k) for k in range(n_a + 1)]


def product_overlap(covectors, site_vectors):
    """Overlap of two product vectors given per site."""
    return np.prod([f @ v for f, v in zip(covectors, site_vectors)])


def purities(state, n_a):
    """Return (purity, dephased purity) of the edge subsystem for one replica state.

    ``state`` is a ReplicaMPS, a dense 6^N vector, or a sequence of per-site
    product vectors.
    """
    from .dense import overlap_product as dense_overlap
    from .mps import ReplicaMPS

    if isinstance(state, ReplicaMPS):
        n = state.n_sites
        _check(n, n_a)
        trace = trace_site_covector()
        right = state.right_environment([trace] * (n - n_a), n_a)

        def contract(fs):
            env = np.ones(1)
            for t, f in zip(state.tensors[:n_a], fs):
                env = env @ np.tensordot(t, f, axes=(1, 0))
            return np.exp(state.log_norm) * (env @ right)
    elif isinstance(state, np.ndarray):
        n = round(np.log(state.size) / np.log(6))
        _check(n, n_a)
        trace = trace_site_covector()

        def contract(fs):
            return dense_overlap(state, list(fs) + [trace] * (n - n_a))
    else:
        vecs = list(state)
        n = len(vecs)
        _check(n, n_a)

        def contract(fs):
            return product_overlap(fs, vecs[:n_a]) * product_overlap(
                [trace_site_covector()] * (n - n_a), vecs[n_a:])

    p = contract([swap_site_covector()] * n_a)
    pq = np.mean([contract([dephased_site_covector(n_a, k)] * n_a) for k in range(n_a + 1)])
    if abs(pq.imag) > 1e-10 * max(1.0, abs(pq.real)):
        raise FloatingPointError(f"dephased purity has imaginary part {pq.imag:.2e}")
    return float(np.real(p)), float(pq.real)


def jackknife_log_ratio(p, pq):
    """Annealed asymmetry ``-log(mean pq / mean p)`` with jackknife standard errors.

    ``p`` and ``pq`` have shape (realizations, times).
    """
    p, pq = np.atleast_2d(p), np.atleast_2d(pq)
    n = p.shape[0]
    est = -np.log(pq.mean(0) / p.mean(0))
    if n < 2:
        return est, np.full(est.shape, np.nan)
    sp, sq = p.sum(0), pq.sum(0)
    loo = -np.log((sq - pq) / (sp - p))
    se = np.sqrt((n - 1) / n * ((loo - loo.mean(0)) ** 2).sum(0))
    return est, se


def _sem(x):
    n = x.shape[0]
    return x.std(0, ddof=1) / np.sqrt(n) if n > 1 else np.full(x.shape[1], np.nan)


@dataclass
class AsymmetryTrace:
    params: dict
    times: np.ndarray
    purity: np.ndarray
    dephased_purity: np.ndarray
    asymmetry: np.ndarray
    stderr: np.ndarray
    realization_count: int
    purity_stderr: np.ndarray = None
    dephased_purity_stderr: np.ndarray = None
    samples: tuple = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, params, p, pq, keep_samples=False):
        p, pq = np.atleast_2d(np.asarray(p, float)), np.atleast_2d(np.asarray(pq, float))
        if p.shape[0] == 0:
            raise ValueError("no realizations to aggregate")
        asym, se = jackknife_log_ratio(p, pq)
        return cls(dict(params), np.arange(p.shape[1]), p.mean(0), pq.mean(0), asym, se,
                   p.shape[0], _sem(p), _sem(pq), (p, pq) if keep_samples else None)


class PurityRecorder:
    """Per-layer callback collecting edge purities of one trajectory."""

    def __init__(self, n_a):
        self.n_a = n_a
        self.purity = []
        self.dephased = []

    def __call__(self, t, state):
        p, pq = purities(state, self.n_a)
        self.purity.append(p)
        self.dephased.append(pq)


def measure(recorders, params):
    """Aggregate recorded realizations: purities are averaged before taking the log."""
    if not recorders:
        raise ValueError("realization count is zero")
    return AsymmetryTrace.from_samples(params, [r.purity for r in recorders],
                                       [r.dephased for r in recorders])
