"""Single realizations of the averaged replica dynamics, in two equivalent pictures.

Forward: the replica state of one initial product state is evolved and
contracted with the swap boundary of every requested subsystem size.

Boundary: since layers are i.i.d. and every gate channel and swap is a real
symmetric matrix, ``<F| T_t ... T_1 |rho>`` has the same distribution as
``<T_1 ... T_t F | rho>``. Evolving the boundary co-vector instead of the state
gives, at every layer, the purities of all initial product states at once.
The dephased boundary is the swap boundary restricted to zero total ket-bra
mismatch of replica 1, which the dynamics conserves.
"""

import numpy as np

from .asymmetry import (dephased_site_covector, purities, swap_site_covector,
                        trace_site_covector)
from .blockmps import BlockMPS, unpack
from .channel import build_averaged_two_site_channel, sample_layer_pairs
from .dense import product_vector
from .mps import (ReplicaMPS, SiteOrder, StepReport, apply_long_range_channel,
                  apply_permuted_channel, evolve_layers)
from .states import InitialStateSpec, build_initial_state


def _diag(reports):
    return {"max_bond": max((r.bond for r in reports), default=1),
            "max_discarded": max((r.discarded_weight for r in reports), default=0.0),
            "capped_steps": sum(int(r.capped) for r in reports)}


ROUTES = ("return", "permute")


class _Router:
    """Applies long-range channels either by swapping back or by tracking the site order.

    With per-site ``weights`` the state is stored as ``w_1 * ... * w_N * |x>`` and
    every gate becomes ``W T W^-1`` on the two sites it touches.
    """

    def __init__(self, n_sites, route, weights=None):
        if route not in ROUTES:
            raise ValueError(f"unknown route {route!r}")
        self.order = SiteOrder(n_sites) if route == "permute" else None
        self.weights = weights
        self._ops = {}

    def _op(self, channel, left, right):
        t = getattr(channel, "two_site_tensor", channel)
        if self.weights is None:
            return t
        wl, wr = self.weights[left], self.weights[right]
        key = (wl.tobytes(), wr.tobytes())
        if key not in self._ops:
            w = np.kron(wl, wr)
            self._ops[key] = w[:, None] * t / w[None, :]
        return self._ops[key]

    def apply(self, state, pair, channel, policy):
        a, b = pair
        if self.order is None:
            return apply_long_range_channel(state, pair, self._op(channel, min(a, b), max(a, b)),
                                            policy)
        if self.order.position[a] > self.order.position[b]:
            a, b = b, a
        return apply_permuted_channel(state, self.order, pair, self._op(channel, a, b), policy)

    def arrange(self, per_site):
        return list(per_site) if self.order is None else self.order.arrange(per_site)


def reference_weights(specs):
    """Per-site weights ``sqrt(v_i)`` of the state at the mean tilt of ``specs``.

    Rescaling the boundary by these weights makes its norm track the overlaps
    with tilted product states, so truncation discards what those overlaps do
    not see. Returns ``None`` when the specs mix families.
    """
    fams = {s.family for s in specs}
    if len(fams) != 1:
        return None
    s0 = specs[0]
    theta = float(np.mean([s.theta for s in specs]))
    vecs = build_initial_state(InitialStateSpec(s0.family, theta, s0.n_sites)).site_vectors
    out = []
    for v in vecs:
        w = np.sqrt(np.abs(v))
        out.append(np.maximum(w, 1e-3 * w.max()))
    return out


def _edge_purities(state, router, n_a):
    n = state.n_sites
    tr = trace_site_covector()
    p = state.overlap_product(router.arrange([swap_site_covector()] * n_a + [tr] * (n - n_a)))
    pq = np.mean([state.overlap_product(
        router.arrange([dephased_site_covector(n_a, k)] * n_a + [tr] * (n - n_a)))
        for k in range(n_a + 1)])
    return float(np.real(p)), float(np.real(pq))


def forward_realization(spec, dist, layers, n_as, policy, rng, channel=None, route="return"):
    """Purity arrays ``{n_a: (p, pq)}`` over ``t = 0..layers`` for one position realization."""
    channel = channel or build_averaged_two_site_channel()
    state = ReplicaMPS.product(build_initial_state(spec).site_vectors)
    router = _Router(dist.n_sites, route)
    rec = {n_a: ([], []) for n_a in n_as}

    def measure():
        for n_a in n_as:
            if router.order is None:
                p, pq = purities(state, n_a)
            else:
                p, pq = _edge_purities(state, router, n_a)
            rec[n_a][0].append(p)
            rec[n_a][1].append(pq)

    measure()
    reports = []
    for _ in range(layers):
        rep = StepReport()
        for pair in sample_layer_pairs(dist, rng):
            rep.add(router.apply(state, pair, channel, policy))
        reports.append(rep)
        measure()
    return {n_a: (np.array(p), np.array(pq)) for n_a, (p, pq) in rec.items()}, _diag(reports)


def boundary_pair(n_sites, n_a, weights=None):
    """Swap boundary and its zero-mismatch part as two dense-bond MPS."""
    sw, tr = swap_site_covector(), trace_site_covector()
    covs = [sw] * n_a + [tr] * (n_sites - n_a)
    if weights is not None:
        covs = [f * w for f, w in zip(covs, weights)]
    block = BlockMPS.product(covs, labels="d")
    zero = {k for k in block.total_keys() if unpack(k)[2] == 0}
    return block.to_mps(), block.to_mps(zero)


def boundary_realization(specs, dist, layers, n_a, policy, rng, channel=None, route="return",
                         weighted=True):
    """Purity arrays ``{spec: (p, pq)}`` over ``t = 0..layers`` from one evolved boundary.

    ``weighted`` rescales the boundary by :func:`reference_weights` of ``specs``
    (only when they share a family).
    """
    channel = channel or build_averaged_two_site_channel()
    n = dist.n_sites
    weights = reference_weights(specs) if weighted else None
    vecs = {s: build_initial_state(s).site_vectors for s in specs}
    if weights is not None:
        vecs = {s: [x / w for x, w in zip(v, weights)] for s, v in vecs.items()}
    swap, deph = boundary_pair(n, n_a, weights)
    # both boundaries see the same pairs but keep separate site orders
    r_swap, r_deph = _Router(n, route, weights), _Router(n, route, weights)
    rec = {s: ([], []) for s in specs}

    def measure():
        for s, v in vecs.items():
            rec[s][0].append(float(swap.overlap_product(r_swap.arrange(v))))
            rec[s][1].append(float(deph.overlap_product(r_deph.arrange(v))))

    measure()
    reports = []
    for _ in range(layers):
        rep = StepReport()
        for pair in sample_layer_pairs(dist, rng):
            rep.add(r_swap.apply(swap, pair, channel, policy))
            rep.add(r_deph.apply(deph, pair, channel, policy))
        reports.append(rep)
        measure()
    return {s: (np.array(p), np.array(pq)) for s, (p, pq) in rec.items()}, _diag(reports)


def averaged_run(spec, dist, layers, n_as, channel=None):
    """Exact pair-averaged evolution (dense, small N): ``{n_a: (p, pq)}``."""
    channel = channel or build_averaged_two_site_channel()
    init = build_initial_state(spec)
    rec = {n_a: ([], []) for n_a in n_as}

    def measure(t, s):
        for n_a in n_as:
            p, pq = purities(s, n_a)
            rec[n_a][0].append(p)
            rec[n_a][1].append(pq)

    evolve_layers(product_vector(init.site_vectors), layers, dist, channel, None, None,
                  mode="averaged", callback=measure)
    return {n_a: (np.array(p), np.array(pq)) for n_a, (p, pq) in rec.items()}
