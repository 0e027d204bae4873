"""Tilted product initial states and their two-replica vectorizations."""

from dataclasses import dataclass

import numpy as np

from .replica import BASIS

FAMILIES = ("tfs", "tns", "tdws")


class ParityError(ValueError):
    pass


def ry(theta):
    """``exp(-i theta Y / 2)``, so that ``ry(theta) @ |0> = cos(theta/2)|0> + sin(theta/2)|1>``."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class InitialStateSpec:
    family: str
    theta: float
    n_sites: int

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n_sites < 1:
            raise ValueError("need at least one site")
        if fam in ("tns", "tdws") and self.n_sites % 2:
            raise ParityError(f"{fam} needs an even number of sites, got {self.n_sites}")
        if not 0 <= self.theta <= np.pi / 2 + 1e-12:
            raise ValueError(f"theta must lie in [0, pi/2], got {self.theta}")

    def bits(self):
        n = self.n_sites
        if self.family == "tfs":
            return [0] * n
        if self.family == "tns":
            return [i % 2 for i in range(n)]
        return [0] * (n // 2) + [1] * (n // 2)


def local_states(spec):
    """Per-site 2-component single-qubit states of the tilted product state."""
    r = ry(spec.theta)
    return [r[:, b].astype(complex) for b in spec.bits()]


def replicated_site_vector16(phi):
    """Four-leg vectorization of ``(|phi><phi|)^(x)2`` (16 components)."""
    phi = np.asarray(phi)
    nrm = np.linalg.norm(phi)
    if abs(nrm - 1) > 1e-12:
        raise ValueError(f"local state must be normalized, got norm {nrm}")
    rho = np.outer(phi, phi.conj())
    return np.einsum("ab,cd->abcd", rho, rho).reshape(16)


def single_site_replica_vector(phi):
    """Effective 6-component coordinates of ``(|phi><phi|)^(x)2``.

    The components outside the effective space are dropped. This is exact for
    every quantity computed here: the averaged channel and all boundary
    vectors annihilate that complement.
    """
    coords, _ = BASIS.restrict(replicated_site_vector16(phi))
    imag = np.max(np.abs(coords.imag))
    if imag > 1e-14:
        raise ValueError(f"replicated coordinates unexpectedly complex ({imag:.1e})")
    return coords.real


@dataclass(frozen=True)
class ProductReplicaState:
    site_vectors: tuple
    norm_log: float = 0.0


def build_initial_state(spec):
    return ProductReplicaState(tuple(single_site_replica_vector(v) for v in local_states(spec)))
