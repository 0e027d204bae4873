"""Single-site two-replica Liouville space and its 6-dimensional effective part.

Each site carries four legs ordered (replica-1 ket, replica-1 bra,
replica-2 ket, replica-2 bra). A four-leg basis state
``(s1, s2, s3, s4)`` is flattened big-endian as ``8*s1 + 4*s2 + 2*s3 + s4``.

The parallel (``+``) and crossed (``-``) states ``|s, r, b>>`` pin the
charges of the two replicas to ``r`` and ``b``; only six of the eight are
linearly independent and they span the effective space used by the
averaged dynamics.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .charges import bit_charge2, doubled

LEG_DIM = 16
EFF_DIM = 6

PARALLEL = "+"
CROSSED = "-"

# order in which raw vectors are fed to the orthonormalizer
CANONICAL_ORDER = [
    (PARALLEL, Fraction(1, 2), Fraction(1, 2)),
    (PARALLEL, Fraction(1, 2), Fraction(-1, 2)),
    (PARALLEL, Fraction(-1, 2), Fraction(1, 2)),
    (PARALLEL, Fraction(-1, 2), Fraction(-1, 2)),
    (CROSSED, Fraction(1, 2), Fraction(-1, 2)),
    (CROSSED, Fraction(-1, 2), Fraction(1, 2)),
]

RAW_LABELS = [(s, r, b) for s in (PARALLEL, CROSSED)
              for r in (Fraction(1, 2), Fraction(-1, 2))
              for b in (Fraction(1, 2), Fraction(-1, 2))]


class InvalidReplicaChargeError(ValueError):
    pass


def flat_index(s1, s2, s3, s4):
    return 8 * s1 + 4 * s2 + 2 * s3 + s4


def build_raw_vector(s, r, b):
    """The 16-component vector ``|s, r, b>>``."""
    try:
        r2, b2 = doubled(r), doubled(b)
    except ValueError as exc:
        raise InvalidReplicaChargeError(str(exc)) from None
    if abs(r2) != 1 or abs(b2) != 1:
        raise InvalidReplicaChargeError(f"replica charges must be +-1/2, got {r}, {b}")
    if s not in (PARALLEL, CROSSED):
        raise ValueError(f"unknown replica pairing {s!r}")
    v = np.zeros(LEG_DIM)
    for a, c in product((0, 1), repeat=2):
        if bit_charge2(a) != r2 or bit_charge2(c) != b2:
            continue
        if s == PARALLEL:
            v[flat_index(a, a, c, c)] += 1.0
        else:
            v[flat_index(a, c, c, a)] += 1.0
    return v


def orthonormalize(vectors, tol=1e-12):
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Vectors whose remainder falls below ``tol`` are skipped.
    """
    basis = []
    for v in vectors:
        w = np.array(v, dtype=float)
        for _ in range(2):
            for e in basis:
                w = w - (e @ w) * e
        nrm = np.linalg.norm(w)
        if nrm > tol:
            basis.append(w / nrm)
    return basis


@dataclass(frozen=True)
class ReplicaBasis:
    raw_vectors: dict
    effective_basis: tuple
    embedding: np.ndarray  # (16, 6) isometry
    gram: np.ndarray       # 8x8 over RAW_LABELS

    def embed(self, coords):
        return self.embedding @ np.asarray(coords)

    def restrict(self, vector):
        """Return effective coordinates and the norm of the part left outside."""
        vector = np.asarray(vector)
        coords = self.embedding.T @ vector
        residual = np.linalg.norm(vector - self.embedding @ coords)
        return coords, residual

    def support_unsorted(self):
        # index of the dominant component of each basis vector, in basis order
        return [int(np.argmax(np.abs(e))) for e in self.effective_basis]

    def support(self):
        return sorted(self.support_unsorted())


def build_effective_basis():
    raw = {lab: build_raw_vector(*lab) for lab in RAW_LABELS}
    basis = orthonormalize([raw[lab] for lab in CANONICAL_ORDER])
    if len(basis) != EFF_DIM:
        raise RuntimeError(f"expected {EFF_DIM} independent replica states, got {len(basis)}")
    mat = np.array([raw[lab] for lab in RAW_LABELS])
    return ReplicaBasis(raw_vectors=raw, effective_basis=tuple(basis),
                        embedding=np.column_stack(basis), gram=mat @ mat.T)


BASIS = build_effective_basis()


def trace_covector16():
    """Vectorized identity on both replicas: sum over r, b of ``<+, r, b|``."""
    return sum(BASIS.raw_vectors[(PARALLEL, r, b)] for _, r, b in RAW_LABELS[:4])


def swap_covector16():
    """Vectorized replica swap: sum over r, b of ``<-, r, b|``."""
    return sum(BASIS.raw_vectors[(CROSSED, r, b)] for _, r, b in RAW_LABELS[4:])


def two_site_to_site_major(vec256):
    """Reorder a two-site four-leg vector from leg-major to site-major layout.

    Leg-major: each of the four legs is a two-site index ``2*bit_i + bit_j``.
    Site-major: the 16 legs of site ``i`` followed by the 16 legs of site ``j``.
    """
    t = np.asarray(vec256).reshape((2,) * 8)  # legs: (i1, j1, i2, j2, i3, j3, i4, j4)
    return t.transpose(0, 2, 4, 6, 1, 3, 5, 7).reshape(256)


def two_site_operator_to_site_major(op):
    t = np.asarray(op).reshape((2,) * 16)
    perm = (0, 2, 4, 6, 1, 3, 5, 7)
    perm = perm + tuple(p + 8 for p in perm)
    return t.transpose(perm).reshape(256, 256)


def effective_charges():
    """Conserved labels ``(S1, S2, D)`` of the six effective basis states.

    ``S1`` and ``S2`` are the doubled replica charges and ``D`` is the charge
    mismatch between ket and bra of replica 1.
    """
    out = []
    for idx in BASIS.support_unsorted():
        a = [bit_charge2((idx >> (3 - k)) & 1) for k in range(4)]
        out.append(((a[0] + a[1]) // 2, (a[2] + a[3]) // 2, (a[0] - a[1]) // 2))
    return np.array(out, dtype=int)
