"""Matrix-product representation of the averaged two-replica state.

Tensors have shape ``(left bond, 6, right bond)`` and are kept real. The state
is stored as ``exp(log_norm) * |tensors>`` with the tensor network itself kept
at unit norm whenever it is in canonical form.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .channel import sample_layer_pairs, swap_operator
from .replica import EFF_DIM


class DimensionMismatchError(ValueError):
    pass


class AveragedModeSizeError(ValueError):
    pass


@dataclass
class TruncationPolicy:
    max_discarded_weight: float = 1e-10
    chi_max: int = 1200
    records: list = field(default_factory=list, repr=False)
    keep_records: bool = False

    def truncate(self, s):
        """Number of singular values to keep out of the descending array ``s``."""
        w = s * s
        total = w.sum()
        if total == 0:
            return 1, 0.0, False
        # tail[k] = weight discarded when keeping k values
        tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]]) / total
        keep = int(np.argmax(tail <= self.max_discarded_weight))
        keep = max(keep, 1)
        # ties at the cutoff are kept
        while keep < len(s) and s[keep] == s[keep - 1]:
            keep += 1
        capped = keep > self.chi_max
        if capped:
            keep = self.chi_max
        return keep, float(tail[keep]), capped


@dataclass
class StepReport:
    discarded_weight: float = 0.0
    bond: int = 1
    svd_steps: int = 0
    capped: bool = False

    def add(self, other):
        self.discarded_weight += other.discarded_weight
        self.bond = max(self.bond, other.bond)
        self.svd_steps += other.svd_steps
        self.capped = self.capped or other.capped


def _svd(m):
    try:
        return la.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except la.LinAlgError:
        return la.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)


class ReplicaMPS:
    def __init__(self, tensors, log_norm=0.0, ortho_center=None):
        self.tensors = [np.asarray(t, dtype=float) for t in tensors]
        self.log_norm = float(log_norm)
        self.ortho_center = ortho_center
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise DimensionMismatchError("boundary bonds must have dimension 1")

    @classmethod
    def product(cls, site_vectors):
        tensors = []
        log_norm = 0.0
        for v in site_vectors:
            v = np.asarray(v, dtype=float)
            nrm = np.linalg.norm(v)
            log_norm += np.log(nrm)
            tensors.append((v / nrm).reshape(1, EFF_DIM, 1))
        return cls(tensors, log_norm, ortho_center=0)

    @property
    def n_sites(self):
        return len(self.tensors)

    @property
    def max_bond(self):
        return max(t.shape[2] for t in self.tensors)

    def bonds(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self):
        return ReplicaMPS([t.copy() for t in self.tensors], self.log_norm, self.ortho_center)

    def to_dense(self):
        v = self.tensors[0].reshape(EFF_DIM, -1)
        for t in self.tensors[1:]:
            v = (v @ t.reshape(t.shape[0], -1)).reshape(-1, t.shape[2])
        return np.exp(self.log_norm) * v.reshape(-1)

    # canonical form -------------------------------------------------------

    def _shift_right(self, k):
        t = self.tensors[k]
        dl, d, dr = t.shape
        q, r = la.qr(t.reshape(dl * d, dr), mode="economic", check_finite=False)
        self.tensors[k] = q.reshape(dl, d, -1)
        self.tensors[k + 1] = np.tensordot(r, self.tensors[k + 1], axes=(1, 0))

    def _shift_left(self, k):
        t = self.tensors[k]
        dl, d, dr = t.shape
        q, r = la.qr(t.reshape(dl, d * dr).T, mode="economic", check_finite=False)
        self.tensors[k] = q.T.reshape(-1, d, dr)
        self.tensors[k - 1] = np.tensordot(self.tensors[k - 1], r.T, axes=(2, 0))

    def canonicalize(self, center=0):
        for k in range(center):
            self._shift_right(k)
        for k in range(self.n_sites - 1, center, -1):
            self._shift_left(k)
        self.ortho_center = center
        self._renormalize_center()

    def move_center(self, target):
        if self.ortho_center is None:
            self.canonicalize(target)
            return
        while self.ortho_center < target:
            self._shift_right(self.ortho_center)
            self.ortho_center += 1
        while self.ortho_center > target:
            self._shift_left(self.ortho_center)
            self.ortho_center -= 1

    def _renormalize_center(self):
        c = self.ortho_center
        nrm = np.linalg.norm(self.tensors[c])
        self.tensors[c] /= nrm
        self.log_norm += np.log(nrm)

    # two-site updates -----------------------------------------------------

    def apply_two_site(self, site, op, policy, sweep_right=True):
        """Apply a 36x36 ``op`` on ``(site, site + 1)`` and split by truncated SVD.

        ``sweep_right`` leaves the orthogonality center on ``site + 1``,
        otherwise on ``site``.
        """
        if not 0 <= site < self.n_sites - 1:
            raise DimensionMismatchError(f"no bond at site {site} for {self.n_sites} sites")
        if op.shape != (EFF_DIM ** 2, EFF_DIM ** 2):
            raise DimensionMismatchError(f"two-site operator has shape {op.shape}")
        if self.ortho_center not in (site, site + 1):
            self.move_center(site if self.ortho_center is None or self.ortho_center < site
                             else site + 1)
        a, b = self.tensors[site], self.tensors[site + 1]
        dl, dr = a.shape[0], b.shape[2]
        theta = np.tensordot(a, b, axes=(2, 0))  # (dl, 6, 6, dr)
        theta = np.tensordot(op, theta.reshape(dl, 36, dr).transpose(1, 0, 2), axes=(1, 0))
        theta = theta.reshape(EFF_DIM, EFF_DIM, dl, dr).transpose(2, 0, 1, 3)
        u, s, vh = _svd(theta.reshape(dl * EFF_DIM, EFF_DIM * dr))
        keep, discarded, capped = policy.truncate(s)
        u, s, vh = u[:, :keep], s[:keep], vh[:keep]
        nrm = np.linalg.norm(s)
        if nrm == 0:
            raise FloatingPointError("state annihilated by two-site update")
        s = s / nrm
        self.log_norm += np.log(nrm)
        if sweep_right:
            self.tensors[site] = u.reshape(dl, EFF_DIM, keep)
            self.tensors[site + 1] = (s[:, None] * vh).reshape(keep, EFF_DIM, dr)
            self.ortho_center = site + 1
        else:
            self.tensors[site] = (u * s).reshape(dl, EFF_DIM, keep)
            self.tensors[site + 1] = vh.reshape(keep, EFF_DIM, dr)
            self.ortho_center = site
        report = StepReport(discarded, keep, 1, capped)
        if policy.keep_records:
            policy.records.append((discarded, keep, capped))
        return report

    # contraction with product co-vectors ----------------------------------

    def overlap_product(self, covectors):
        """``<<f_1 ... f_N | state>>`` for per-site 6-component co-vectors."""
        env = np.ones(1)
        for t, f in zip(self.tensors, covectors):
            env = env @ np.tensordot(t, f, axes=(1, 0))
        return np.exp(self.log_norm) * env[0]

    def right_environment(self, covectors, start):
        """Contraction of sites ``start..N-1`` with product co-vectors, as a bond vector."""
        env = np.ones(1)
        for t, f in zip(self.tensors[::-1][: self.n_sites - start], covectors[::-1]):
            env = np.tensordot(t, f, axes=(1, 0)) @ env
        return env


def apply_adjacent_channel(state, site, channel, policy):
    op = getattr(channel, "two_site_tensor", channel)
    return state.apply_two_site(site, op, policy)


def apply_long_range_channel(state, pair, channel, policy):
    """Apply ``channel`` on sites ``pair = (i, j)`` through adjacent swaps.

    Site ``j`` is swapped leftwards next to ``i``, the channel is applied on
    the adjacent bond, and the site is swapped back.
    """
    i, j = pair
    if i > j:
        i, j = j, i
    if i == j or i < 0 or j >= state.n_sites:
        raise DimensionMismatchError(f"invalid pair {pair} for {state.n_sites} sites")
    op = getattr(channel, "two_site_tensor", channel)
    sw = swap_operator()
    report = StepReport()
    # approach from the side nearest to the orthogonality center
    for k in range(j - 1, i, -1):
        report.add(state.apply_two_site(k, sw, policy, sweep_right=False))
    report.add(state.apply_two_site(i, op, policy, sweep_right=True))
    for k in range(i + 1, j):
        report.add(state.apply_two_site(k, sw, policy, sweep_right=True))
    return report


@dataclass
class Trajectory:
    state: object
    reports: list = field(default_factory=list)
    pairs: list = field(default_factory=list)


def evolve_layers(state, layers, dist, channel, policy, rng, mode="sampled", callback=None):
    """Evolve ``layers`` layers of ``n_sites`` gates each.

    ``callback(t, state)`` is invoked for ``t = 0..layers``. In sampled mode
    ``state`` is a :class:`ReplicaMPS` and one pair realization is drawn; in
    averaged mode ``state`` is a dense 6^N vector evolved under the exact
    pair-averaged gate channel.
    """
    if layers < 0:
        raise ValueError("layers must be non-negative")
    traj = Trajectory(state)
    if mode == "averaged":
        from .dense import averaged_gate_channel_apply

        if dist.n_sites > 8:
            raise AveragedModeSizeError(f"averaged mode limited to N <= 8, got {dist.n_sites}")
        v = state if isinstance(state, np.ndarray) else state.to_dense()
        if callback:
            callback(0, v)
        for t in range(1, layers + 1):
            for _ in range(dist.n_sites):
                v = averaged_gate_channel_apply(v, dist, channel)
            if callback:
                callback(t, v)
        traj.state = v
        return traj
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    if callback:
        callback(0, state)
    for t in range(1, layers + 1):
        layer_report = StepReport()
        pairs = sample_layer_pairs(dist, rng)
        for pair in pairs:
            layer_report.add(apply_long_range_channel(state, pair, channel, policy))
        traj.reports.append(layer_report)
        traj.pairs.append(pairs)
        if callback:
            callback(t, state)
    return traj


class SiteOrder:
    """Logical-to-physical site permutation for routing without swapping back."""

    def __init__(self, n_sites):
        self.position = list(range(n_sites))   # logical -> physical
        self.site_at = list(range(n_sites))    # physical -> logical

    def swap(self, x):
        """Record the exchange of physical sites ``x`` and ``x + 1``."""
        a, b = self.site_at[x], self.site_at[x + 1]
        self.site_at[x], self.site_at[x + 1] = b, a
        self.position[a], self.position[b] = x + 1, x

    def arrange(self, per_logical):
        """Reorder per-logical-site data into physical order."""
        return [per_logical[k] for k in self.site_at]


def apply_permuted_channel(state, order, pair, channel, policy):
    """Bring logical sites ``pair`` together by swaps, apply ``channel``, keep the new order.

    The site farther from the orthogonality center is moved, so fewer canonical
    shifts are needed; the channel is symmetric under exchange of its two sites.
    """
    a, b = pair
    if a == b:
        raise DimensionMismatchError(f"invalid pair {pair}")
    x, y = sorted((order.position[a], order.position[b]))
    op = getattr(channel, "two_site_tensor", channel)
    sw = swap_operator()
    report = StepReport()
    center = state.ortho_center if state.ortho_center is not None else x
    if abs(center - y) <= abs(center - x):
        # move the left site rightwards next to y
        for k in range(x, y - 1):
            report.add(state.apply_two_site(k, sw, policy, sweep_right=True))
            order.swap(k)
        report.add(state.apply_two_site(y - 1, op, policy, sweep_right=True))
    else:
        for k in range(y - 1, x, -1):
            report.add(state.apply_two_site(k, sw, policy, sweep_right=False))
            order.swap(k)
        report.add(state.apply_two_site(x, op, policy, sweep_right=False))
    return report
