"""Exact statevector simulation of U(1)-symmetric random circuits for small chains.

Both randomness sources (gate positions and Haar blocks) are sampled by plain
Monte Carlo; annealed purities are realization averages.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .channel import sample_layer_pairs
from .charges import basis_charges2
from .states import InitialStateSpec, local_states

ED_MAX_SITES = 14


class SizeGuardError(ValueError):
    pass


def haar_unitary(d, rng):
    """Haar-random ``d x d`` unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


@dataclass(frozen=True)
class BlockHaarGate:
    phase_up: complex
    phase_down: complex
    center_block: np.ndarray

    def matrix(self):
        # two-site index 2*bit_i + bit_j: |00> (+1), |01>,|10> (0), |11> (-1)
        u = np.zeros((4, 4), dtype=complex)
        u[0, 0] = self.phase_up
        u[1:3, 1:3] = self.center_block
        u[3, 3] = self.phase_down
        return u


def sample_block_haar_gate(rng):
    up, down = np.exp(2j * np.pi * rng.random(2))
    return BlockHaarGate(up, down, haar_unitary(2, rng))


def apply_two_site_gate(psi, u, i, j, n):
    """Apply 4x4 ``u`` on sites ``i, j`` of an ``n``-site statevector (returns new array)."""
    t = psi.reshape((2,) * n)
    t = np.moveaxis(t, (i, j), (0, 1)).reshape(4, -1)
    t = (u @ t).reshape((2, 2) + (2,) * (n - 2))
    return np.moveaxis(t, (0, 1), (i, j)).reshape(-1)


def product_statevector(vectors):
    psi = np.ones(1, dtype=complex)
    for v in vectors:
        psi = np.kron(psi, v)
    return psi


def edge_purities(psi, n, n_a):
    """Return (Tr rho_A^2, Tr rho_{A,Q}^2) for A = the leftmost ``n_a`` sites."""
    m = psi.reshape(2 ** n_a, 2 ** (n - n_a))
    rho = m @ m.conj().T
    purity = float(np.real(np.vdot(rho, rho)))
    q = basis_charges2(n_a)
    same = q[:, None] == q[None, :]
    deph = float(np.real(np.vdot(rho[same], rho[same])))
    return purity, deph


@dataclass
class EDRun:
    params: dict
    times: np.ndarray
    purities: np.ndarray = field(repr=False)           # (realizations, t+1)
    dephased_purities: np.ndarray = field(repr=False)  # (realizations, t+1)


def run_ed_realization(spec, dist, layers, n_a, rng):
    """One realization; ``n_a`` may be a sequence, giving arrays of shape (len(n_a), t+1)."""
    n = spec.n_sites
    sizes = np.atleast_1d(n_a)
    psi = product_statevector(local_states(spec))
    p = np.empty((len(sizes), layers + 1))
    pq = np.empty((len(sizes), layers + 1))

    def record(t):
        for k, m in enumerate(sizes):
            p[k, t], pq[k, t] = edge_purities(psi, n, int(m))

    record(0)
    for t in range(1, layers + 1):
        for i, j in sample_layer_pairs(dist, rng):
            psi = apply_two_site_gate(psi, sample_block_haar_gate(rng).matrix(), i, j, n)
        record(t)
    if np.ndim(n_a) == 0:
        p, pq = p[0], pq[0]
    return p, pq, float(np.linalg.norm(psi))


def run_ed(spec, dist, layers, realizations, n_a, rng=None, rngs=None):
    """Monte Carlo over gates and positions; ``rngs`` optionally gives one generator per realization.

    With a sequence ``n_a`` the purity arrays gain a leading subsystem axis.
    """
    if spec.n_sites > ED_MAX_SITES:
        raise SizeGuardError(f"ED limited to {ED_MAX_SITES} sites, got {spec.n_sites}")
    if dist.n_sites != spec.n_sites:
        raise ValueError("pair distribution and initial state disagree on N")
    if realizations < 1:
        raise ValueError("need at least one realization")
    if rngs is None:
        rng = np.random.default_rng(rng)
        rngs = rng.spawn(realizations)
    elif len(rngs) != realizations:
        raise ValueError("one generator per realization required")
    ps, pqs = [], []
    for r in rngs:
        p, pq, norm = run_ed_realization(spec, dist, layers, n_a, r)
        if abs(norm - 1) > 1e-12:
            raise RuntimeError(f"statevector norm drifted to {norm}")
        ps.append(p)
        pqs.append(pq)
    ps, pqs = np.array(ps), np.array(pqs)
    if np.ndim(n_a):
        ps, pqs = ps.transpose(1, 0, 2), pqs.transpose(1, 0, 2)
    params = dict(method="ed", family=spec.family, theta=spec.theta, alpha=dist.alpha,
                  n_sites=spec.n_sites, n_a=n_a if np.ndim(n_a) == 0 else list(n_a),
                  layers=layers, realizations=realizations)
    return EDRun(params, np.arange(layers + 1), ps, pqs)


def _count(k_max, size_k, size_rest, n, m):
    # sum_k C(size_k, k) C(size_rest, n-k) C(size_rest, m-k)
    return sum(comb(size_k, k) * comb(size_rest, n - k) * comb(size_rest, m - k)
               for k in range(k_max + 1) if 0 <= n - k <= size_rest and 0 <= m - k <= size_rest)


def steady_state_purities(spec, n_a):
    """Purities of the edge subsystem averaged over a global block-Haar unitary.

    This is the infinite-depth limit of the annealed purities: the second
    moment of the circuit converges to that of a Haar unitary in every charge
    sector. Closed form in sector dimensions, so any N works. Returns
    ``(purity, dephased_purity, asymmetry)``.
    """
    n = spec.n_sites
    if not 1 <= n_a <= n:
        raise ValueError(f"subsystem size {n_a} outside 1..{n}")
    weights = np.ones(1)
    for v in local_states(spec):
        weights = np.convolve(weights, np.abs(np.asarray(v)) ** 2)
    n_b = n - n_a
    dim = [comb(n, k) for k in range(n + 1)]
    p = pq = 0.0
    for a in range(n + 1):
        for b in range(n + 1):
            if weights[a] == 0 or weights[b] == 0:
                continue
            # pairs of basis states agreeing on A, and agreeing on B
            on_a = _count(n_a, n_a, n_b, a, b)
            on_b = _count(n_b, n_b, n_a, a, b)
            if a == b:
                w = weights[a] ** 2 / (dim[a] * (dim[a] + 1))
                p += w * (on_a + on_b)
                pq += w * (on_a + on_b)
            else:
                w = weights[a] * weights[b] / (dim[a] * dim[b])
                p += w * (on_a + on_b)
                pq += w * on_a
    return float(p), float(pq), float(-np.log(pq / p))
