"""Charge-block-sparse MPS for the averaged replica dynamics.

Every effective basis state carries definite labels ``(S1, S2, D)`` which the
averaged gate conserves, so each bond splits into charge sectors and a site
tensor only has blocks from left sector ``q`` to right sector ``q + c_mu``.
Sector labels are packed into single integers so that label addition is plain
integer addition.

The last bond enumerates the total charges of the state (one dimension per
sector); contractions sum over it, or over a subset of it.
"""

from collections import defaultdict

import numpy as np
import scipy.linalg as la

from .mps import DimensionMismatchError, StepReport, _svd
from .replica import EFF_DIM, effective_charges

_BASE = 256
_HALF = _BASE // 2


def pack(s1, s2, d):
    return (s1 * _BASE + s2) * _BASE + d


def unpack(key):
    d = (key + _HALF) % _BASE - _HALF
    rest = (key - d) // _BASE
    s2 = (rest + _HALF) % _BASE - _HALF
    s1 = (rest - s2) // _BASE
    return s1, s2, d


CHARGES = effective_charges()
LABEL_SETS = {"s1s2d": (1, 1, 1), "d": (0, 0, 1)}


def mu_keys(labels):
    try:
        w = np.array(LABEL_SETS[labels])
    except KeyError:
        raise ValueError(f"unknown label set {labels!r}") from None
    return tuple(int(pack(*(c * w))) for c in CHARGES)


def _pair_groups(op, mu_key, tol=1e-14):
    """Split a charge-conserving 36x36 operator into blocks of equal total label."""
    totals = defaultdict(list)
    for mu in range(EFF_DIM):
        for nu in range(EFF_DIM):
            totals[mu_key[mu] + mu_key[nu]].append(mu * EFF_DIM + nu)
    groups = {}
    mask = np.zeros(op.shape, bool)
    for tot, idx in totals.items():
        groups[tot] = (idx, np.ascontiguousarray(op[np.ix_(idx, idx)]))
        mask[np.ix_(idx, idx)] = True
    leak = np.abs(op[~mask]).max() if (~mask).any() else 0.0
    if leak > tol:
        raise ValueError(f"two-site operator mixes charge sectors (max {leak:.2e})")
    return groups


_GROUP_CACHE = {}


def _groups_for(op, mu_key):
    key = (id(op), mu_key)
    hit = _GROUP_CACHE.get(key)
    if hit is None or hit[0] is not op:
        hit = (op, _pair_groups(op, mu_key))
        _GROUP_CACHE[key] = hit
    return hit[1]


class BlockMPS:
    """MPS with tensors stored as ``{(left_key, mu): block}`` per site."""

    def __init__(self, tensors, bonds, log_norm=0.0, ortho_center=None, labels="s1s2d"):
        self.labels = labels
        self.mu_key = mu_keys(labels)
        self.tensors = tensors
        self.bonds = bonds
        self.log_norm = float(log_norm)
        self.ortho_center = ortho_center

    @classmethod
    def product(cls, site_vectors, labels="s1s2d", allowed_totals=None, canonical=True):
        """Product state; ``allowed_totals(key)`` optionally projects onto some total sectors."""
        mu_key = mu_keys(labels)
        bonds = [{0: 1}]
        tensors = []
        log_norm = 0.0
        for v in site_vectors:
            v = np.asarray(v, dtype=float)
            nrm = np.linalg.norm(v)
            log_norm += np.log(nrm)
            v = v / nrm
            t = {}
            right = {}
            for lk in bonds[-1]:
                for mu in np.flatnonzero(v):
                    t[(lk, int(mu))] = np.array([[v[mu]]])
                    right[lk + mu_key[mu]] = 1
            tensors.append(t)
            bonds.append(right)
        if allowed_totals is not None:
            last = tensors[-1]
            for key in list(last):
                if not allowed_totals(key[0] + mu_key[key[1]]):
                    del last[key]
            bonds[-1] = {k: 1 for k in bonds[-1] if allowed_totals(k)}
            if not bonds[-1]:
                raise ValueError("projection removes the whole state")
        # paths reaching one sector share its single bond index
        state = cls(tensors, bonds, log_norm, None, labels)
        if canonical:
            state.canonicalize(0)
        return state

    @property
    def n_sites(self):
        return len(self.tensors)

    def bond_dims(self):
        return [sum(b.values()) for b in self.bonds[1:-1]]

    @property
    def max_bond(self):
        dims = self.bond_dims()
        return max(dims) if dims else 1

    def sector_counts(self):
        return [len(b) for b in self.bonds[1:-1]]

    def copy(self):
        return BlockMPS([{k: b.copy() for k, b in t.items()} for t in self.tensors],
                        [dict(b) for b in self.bonds], self.log_norm, self.ortho_center,
                        self.labels)

    def to_dense(self, totals=None):
        env = {0: np.ones((1, 1))}
        for t, right in zip(self.tensors, self.bonds[1:]):
            new = {}
            for (lk, mu), blk in t.items():
                if lk not in env:
                    continue
                rk = lk + self.mu_key[mu]
                e = env[lk]
                contrib = np.zeros((e.shape[0], EFF_DIM, blk.shape[1]))
                contrib[:, mu, :] = e @ blk
                contrib = contrib.reshape(-1, blk.shape[1])
                if rk in new:
                    new[rk] = new[rk] + contrib
                else:
                    new[rk] = contrib
            env = new
        out = 0.0
        for k, v in env.items():
            if totals is None or k in totals:
                out = out + v.sum(axis=1)
        return np.exp(self.log_norm) * out

    # canonical form -------------------------------------------------------

    def _by_right(self, k):
        groups = defaultdict(list)
        for (lk, mu), blk in self.tensors[k].items():
            groups[lk + self.mu_key[mu]].append((lk, mu))
        return groups

    def _by_left(self, k):
        groups = defaultdict(list)
        for (lk, mu) in self.tensors[k]:
            groups[lk].append(mu)
        return groups

    def _shift_right(self, k):
        t, nxt = self.tensors[k], self.tensors[k + 1]
        new_bond = {}
        rs = {}
        for rk, rows in self._by_right(k).items():
            m = np.vstack([t[r] for r in rows])
            q, r = la.qr(m, mode="economic", check_finite=False)
            off = 0
            for row in rows:
                h = t[row].shape[0]
                t[row] = q[off:off + h]
                off += h
            new_bond[rk] = q.shape[1]
            rs[rk] = r
        for key in list(nxt):
            r = rs.get(key[0])
            if r is None:
                del nxt[key]
            else:
                nxt[key] = r @ nxt[key]
        self.bonds[k + 1] = new_bond

    def _shift_left(self, k):
        t, prev = self.tensors[k], self.tensors[k - 1]
        new_bond = {}
        rs = {}
        for lk, mus in self._by_left(k).items():
            m = np.hstack([t[(lk, mu)] for mu in mus])
            q, r = la.qr(m.T, mode="economic", check_finite=False)
            q = q.T
            off = 0
            for mu in mus:
                w = t[(lk, mu)].shape[1]
                t[(lk, mu)] = q[:, off:off + w]
                off += w
            new_bond[lk] = q.shape[0]
            rs[lk] = r.T
        for key in list(prev):
            r = rs.get(key[0] + self.mu_key[key[1]])
            if r is None:
                del prev[key]
            else:
                prev[key] = prev[key] @ r
        self.bonds[k] = new_bond

    def _renormalize_center(self):
        t = self.tensors[self.ortho_center]
        nrm = np.sqrt(sum(np.sum(b * b) for b in t.values()))
        if nrm == 0:
            raise FloatingPointError("state has zero norm")
        for key in t:
            t[key] = t[key] / nrm
        self.log_norm += np.log(nrm)

    def canonicalize(self, center=0):
        for k in range(self.n_sites - 1, center, -1):
            self._shift_left(k)
        for k in range(center):
            self._shift_right(k)
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

    # two-site update ------------------------------------------------------

    def apply_two_site(self, site, op, policy, sweep_right=True):
        if not 0 <= site < self.n_sites - 1:
            raise DimensionMismatchError(f"no bond at site {site} for {self.n_sites} sites")
        if op.shape != (EFF_DIM ** 2, EFF_DIM ** 2):
            raise DimensionMismatchError(f"two-site operator has shape {op.shape}")
        if self.ortho_center not in (site, site + 1):
            self.move_center(site if self.ortho_center is None or self.ortho_center < site
                             else site + 1)
        groups = _groups_for(op, self.mu_key)
        a, b = self.tensors[site], self.tensors[site + 1]
        left, right = self.bonds[site], self.bonds[site + 2]

        # theta blocks keyed by (left sector, right sector) -> {pair index: block}
        b_by_left = defaultdict(list)
        for (mk, nu), blk in b.items():
            b_by_left[mk].append((nu, blk))
        theta = defaultdict(dict)
        for (lk, mu), ablk in a.items():
            mk = lk + self.mu_key[mu]
            for nu, bblk in b_by_left.get(mk, ()):
                theta[(lk, mk + self.mu_key[nu])][mu * EFF_DIM + nu] = ablk @ bblk

        # apply the operator within each (left, right) sector pair
        new_theta = {}
        for (lk, rk), blocks in theta.items():
            idx, sub = groups[rk - lk]
            dl, dr = left[lk], right[rk]
            if len(idx) == 1:
                out = sub[0, 0] * blocks[idx[0]]
                if out.any():
                    new_theta[(lk, idx[0])] = out
                continue
            stack = np.zeros((len(idx), dl * dr))
            present = []
            for g, p in enumerate(idx):
                blk = blocks.get(p)
                if blk is not None:
                    stack[g] = blk.reshape(-1)
                    present.append(g)
            if len(present) < len(idx):
                res = sub[:, present] @ stack[present]
            else:
                res = sub @ stack
            for g, p in enumerate(idx):
                if res[g].any():
                    new_theta[(lk, p)] = res[g].reshape(dl, dr)

        # regroup by the new middle sector and split
        mids = defaultdict(lambda: (set(), set()))
        for (lk, p) in new_theta:
            mu, nu = divmod(p, EFF_DIM)
            mk = lk + self.mu_key[mu]
            rows, cols = mids[mk]
            rows.add((lk, mu))
            cols.add((nu, mk + self.mu_key[nu]))
        factors = {}
        all_s = []
        for mk, (rows, cols) in mids.items():
            rows, cols = sorted(rows), sorted(cols)
            roff, off = {}, 0
            for r in rows:
                roff[r] = off
                off += left[r[0]]
            nr = off
            coff, off = {}, 0
            for c in cols:
                coff[c] = off
                off += right[c[1]]
            m = np.zeros((nr, off))
            for (lk, mu) in rows:
                r0 = roff[(lk, mu)]
                for (nu, rk) in cols:
                    blk = new_theta.get((lk, mu * EFF_DIM + nu))
                    if blk is not None:
                        c0 = coff[(nu, rk)]
                        m[r0:r0 + blk.shape[0], c0:c0 + blk.shape[1]] = blk
            u, s, vh = _svd(m)
            factors[mk] = (rows, roff, cols, coff, u, s, vh)
            all_s.append(s)
        if not all_s:
            raise FloatingPointError("state annihilated by two-site update")
        s_all = np.concatenate(all_s)
        order = np.argsort(-s_all, kind="stable")
        keep, discarded, capped = policy.truncate(s_all[order])
        # keep exactly ``keep`` values
        chosen = np.zeros(s_all.size, bool)
        chosen[order[:keep]] = True
        nrm = np.linalg.norm(s_all[chosen])
        if nrm == 0:
            raise FloatingPointError("state annihilated by two-site update")
        self.log_norm += np.log(nrm)

        new_a, new_b, new_bond = {}, {}, {}
        pos = 0
        for mk, (rows, roff, cols, coff, u, s, vh) in factors.items():
            k = int(chosen[pos:pos + s.size].sum())
            pos += s.size
            if k == 0:
                continue
            u, s, vh = u[:, :k], s[:k] / nrm, vh[:k]
            if sweep_right:
                vh = s[:, None] * vh
            else:
                u = u * s
            for (lk, mu) in rows:
                r0 = roff[(lk, mu)]
                new_a[(lk, mu)] = u[r0:r0 + left[lk]]
            for (nu, rk) in cols:
                c0 = coff[(nu, rk)]
                new_b[(mk, nu)] = vh[:, c0:c0 + right[rk]]
            new_bond[mk] = k
        self.tensors[site], self.tensors[site + 1] = new_a, new_b
        self.bonds[site + 1] = new_bond
        self.ortho_center = site + 1 if sweep_right else site
        report = StepReport(discarded, sum(new_bond.values()), 1, capped)
        if policy.keep_records:
            policy.records.append((discarded, report.bond, capped))
        return report

    # contractions -----------------------------------------------------------

    def overlap_product(self, covectors, totals=None):
        """``<<f_1 ... f_N | state>>``, optionally restricted to some total sectors."""
        env = {0: np.ones(1)}
        for t, f in zip(self.tensors, covectors):
            new = {}
            for (lk, mu), blk in t.items():
                e = env.get(lk)
                if e is None or f[mu] == 0:
                    continue
                rk = lk + self.mu_key[mu]
                c = f[mu] * (e @ blk)
                new[rk] = new[rk] + c if rk in new else c
            env = new
        out = sum((v.sum() for k, v in env.items() if totals is None or k in totals), 0.0)
        return np.exp(self.log_norm) * out

    def total_keys(self, d=None):
        keys = self.bonds[-1].keys()
        if d is None:
            return set(keys)
        return {k for k in keys if unpack(k)[2] == d}

    def to_mps(self, totals=None):
        """Dense-bond :class:`ReplicaMPS` summing over (some of) the total sectors."""
        from .mps import ReplicaMPS

        offsets = []
        for bond in self.bonds:
            off, pos = {}, 0
            for k in sorted(bond):
                off[k] = pos
                pos += bond[k]
            offsets.append((off, pos))
        tensors = []
        for site, t in enumerate(self.tensors):
            (loff, dl), (roff, dr) = offsets[site], offsets[site + 1]
            a = np.zeros((dl, EFF_DIM, dr))
            for (lk, mu), blk in t.items():
                rk = lk + self.mu_key[mu]
                a[loff[lk]:loff[lk] + blk.shape[0], mu, roff[rk]:roff[rk] + blk.shape[1]] = blk
            tensors.append(a)
        roff, dr = offsets[-1]
        cap = np.zeros((dr, 1))
        for k, pos in roff.items():
            if totals is None or k in totals:
                cap[pos:pos + self.bonds[-1][k], 0] = 1.0
        tensors[-1] = np.tensordot(tensors[-1], cap, axes=(2, 0))
        out = ReplicaMPS(tensors, self.log_norm)
        out.canonicalize(0)
        return out
