"""U(1) charge-sector bookkeeping for spin-1/2 chains.

Local convention: ``|0>`` carries charge +1/2 and ``|1>`` carries -1/2, i.e.
``Q_i = Z_i / 2``. Charges are handled internally as doubled integers
(``2q``) so that all sector arithmetic stays exact.

Computational basis states of ``n`` sites are indexed big-endian: site 1 is
the most significant bit.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np


class InvalidChargeError(ValueError):
    pass


def doubled(q):
    """Return ``2q`` as an int, raising if ``q`` is not a half-integer."""
    two_q = Fraction(q) * 2
    if two_q.denominator != 1:
        raise InvalidChargeError(f"charge {q!r} is not a half-integer")
    return int(two_q)


def bit_charge2(bit):
    """Doubled charge of a single computational state (0 -> +1, 1 -> -1)."""
    return 1 - 2 * int(bit)


def _check(n, two_q):
    if n < 0:
        raise InvalidChargeError(f"site count must be non-negative, got {n}")
    if abs(two_q) > n or (n + two_q) % 2:
        raise InvalidChargeError(
            f"charge {Fraction(two_q, 2)} not allowed on {n} sites")


def sector_dimension(n, q):
    """Number of ``n``-site basis states with total charge ``q``."""
    two_q = doubled(q)
    _check(n, two_q)
    return comb(n, (n + two_q) // 2)


def sector_charges2(n):
    """Doubled charges ``-n, -n+2, ..., n`` of all sectors on ``n`` sites."""
    return list(range(-n, n + 1, 2))


def basis_charges2(n):
    """Doubled total charge of every computational basis state, shape (2**n,)."""
    idx = np.arange(2 ** n)
    ones = np.zeros(2 ** n, dtype=np.int64)
    for s in range(n):
        ones += (idx >> s) & 1
    return n - 2 * ones


def charge_projector(n, q):
    """Diagonal 0/1 projector onto the charge-``q`` sector of ``n`` sites."""
    two_q = doubled(q)
    _check(n, two_q)
    return np.diag((basis_charges2(n) == two_q).astype(float))


@dataclass(frozen=True)
class ChargeBasis:
    n_sites: int
    sector_labels: tuple = field(init=False)
    sector_dims: dict = field(init=False)

    def __post_init__(self):
        if self.n_sites < 1:
            raise InvalidChargeError("need at least one site")
        labels = tuple(Fraction(c, 2) for c in sector_charges2(self.n_sites))
        object.__setattr__(self, "sector_labels", labels)
        object.__setattr__(self, "sector_dims",
                           {q: sector_dimension(self.n_sites, q) for q in labels})

    def projectors(self):
        return {q: charge_projector(self.n_sites, q) for q in self.sector_labels}


@dataclass(frozen=True)
class TwoSiteSectors:
    """Sectors of ``Q_i + Q_j`` on a two-site support (local charge -1, 0, +1)."""

    labels: tuple = (-1, 0, 1)

    @property
    def dims(self):
        return {q: len(self.basis_index_map[q]) for q in self.labels}

    @property
    def basis_index_map(self):
        # two-site index = 2*bit_i + bit_j
        out = {q: [] for q in self.labels}
        for x in range(4):
            q2 = bit_charge2(x >> 1) + bit_charge2(x & 1)
            out[q2 // 2].append(x)
        return out


TWO_SITE = TwoSiteSectors()
