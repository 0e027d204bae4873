import numpy as np
import pytest

from u1mpemba.asymmetry import purities
from u1mpemba.blockmps import BlockMPS, pack, unpack
from u1mpemba.channel import PairDistribution, build_averaged_two_site_channel, sample_layer_pairs
from u1mpemba.dense import apply_pair, overlap_product, product_vector
from u1mpemba.mps import ReplicaMPS, TruncationPolicy
from u1mpemba.states import InitialStateSpec, build_initial_state
from u1mpemba.trajectories import (ROUTES, _Router, averaged_run, boundary_pair,
                                   boundary_realization, forward_realization, reference_weights)

CH = build_averaged_two_site_channel()
EXACT = TruncationPolicy(0.0, 10 ** 6)


@pytest.mark.parametrize("key", [(1, -1, 0), (-3, 5, -2), (0, 0, 1), (-24, 24, 12)])
def test_pack_roundtrip(key):
    assert unpack(pack(*key)) == key


@pytest.mark.parametrize("labels", ["s1s2d", "d"])
def test_block_mps_matches_dense(labels):
    n = 5
    rng = np.random.default_rng(3)
    vecs = build_initial_state(InitialStateSpec("tfs", 0.3 * np.pi, n)).site_vectors
    pairs = sample_layer_pairs(PairDistribution(1.0, n), rng, 12)
    b = BlockMPS.product(vecs, labels=labels)
    v = product_vector(vecs)
    for i, j in pairs:
        lo, hi = min(i, j), max(i, j)
        for k in range(hi - 1, lo, -1):
            b.apply_two_site(k, _swap(), EXACT, sweep_right=False)
        b.apply_two_site(lo, CH.two_site_tensor, EXACT)
        for k in range(lo + 1, hi):
            b.apply_two_site(k, _swap(), EXACT)
        v = apply_pair(v, CH.two_site_tensor, i, j, n)
    np.testing.assert_allclose(b.to_dense(), v, atol=1e-13)
    np.testing.assert_allclose(b.to_mps().to_dense(), v, atol=1e-13)


def _swap():
    from u1mpemba.channel import swap_operator
    return swap_operator()


def test_block_mps_rejects_leaky_operator():
    b = BlockMPS.product([np.ones(6)] * 3)
    with pytest.raises(ValueError):
        b.apply_two_site(0, np.ones((36, 36)), EXACT)


def test_boundary_pair_splits_dephasing():
    n, n_a = 5, 3
    swap, zero = boundary_pair(n, n_a)
    vecs = build_initial_state(InitialStateSpec("tfs", 0.35 * np.pi, n)).site_vectors
    p, pq = purities(vecs, n_a)
    assert swap.overlap_product(vecs) == pytest.approx(p, abs=1e-13)
    assert zero.overlap_product(vecs) == pytest.approx(pq, abs=1e-13)


@pytest.mark.parametrize("route", ROUTES)
@pytest.mark.parametrize("weighted", [False, True])
def test_boundary_picture_with_reversed_pairs(route, weighted):
    # <F| T_L ... T_1 |rho> equals <T_1 ... T_L F|rho> for symmetric gate channels
    n, n_a = 6, 2
    specs = [InitialStateSpec("tns", th, n) for th in (0.3 * np.pi, 0.4 * np.pi)]
    pairs = sample_layer_pairs(PairDistribution(0.8, n), np.random.default_rng(5), 3 * n)
    weights = reference_weights(specs) if weighted else None
    swap, zero = boundary_pair(n, n_a, weights)
    rs, rz = _Router(n, route, weights), _Router(n, route, weights)
    for pair in pairs[::-1]:
        rs.apply(swap, pair, CH, EXACT)
        rz.apply(zero, pair, CH, EXACT)
    for spec in specs:
        vecs = build_initial_state(spec).site_vectors
        if weights is not None:
            vecs = [v / w for v, w in zip(vecs, weights)]
        m = ReplicaMPS.product(build_initial_state(spec).site_vectors)
        r = _Router(n, "return")
        for pair in pairs:
            r.apply(m, pair, CH, EXACT)
        p, pq = purities(m, n_a)
        assert swap.overlap_product(rs.arrange(vecs)) == pytest.approx(p, abs=1e-10)
        assert zero.overlap_product(rz.arrange(vecs)) == pytest.approx(pq, abs=1e-10)


def test_forward_routes_agree():
    spec = InitialStateSpec("tfs", 0.3 * np.pi, 6)
    dist = PairDistribution(1.0, 6)
    out = [forward_realization(spec, dist, 3, [1, 2, 4], EXACT, np.random.default_rng(2),
                               route=r)[0] for r in ROUTES]
    for n_a in (1, 2, 4):
        np.testing.assert_allclose(out[0][n_a], out[1][n_a], atol=1e-12)


def test_boundary_routes_and_weights_agree():
    specs = [InitialStateSpec("tdws", th, 6) for th in (0.3 * np.pi, 0.4 * np.pi)]
    dist = PairDistribution(1.0, 6)
    runs = [boundary_realization(specs, dist, 3, 2, EXACT, np.random.default_rng(2), route=r,
                                 weighted=w)[0] for r in ROUTES for w in (False, True)]
    for s in specs:
        for run in runs[1:]:
            np.testing.assert_allclose(run[s], runs[0][s], atol=1e-12)


def test_reference_weights():
    specs = [InitialStateSpec("tns", 0.2, 4), InitialStateSpec("tns", 0.6, 4)]
    w = reference_weights(specs)
    assert len(w) == 4 and all(np.all(x > 0) for x in w)
    np.testing.assert_allclose(w[0], w[2])
    assert reference_weights([specs[0], InitialStateSpec("tfs", 0.2, 4)]) is None


def test_diagnostics_reported():
    spec = InitialStateSpec("tfs", 0.3 * np.pi, 8)
    _, diag = forward_realization(spec, PairDistribution(1.0, 8), 3, [2],
                                  TruncationPolicy(1e-4, 4), np.random.default_rng(0))
    assert diag["max_bond"] <= 4 and diag["capped_steps"] > 0


def test_averaged_run_shapes():
    res = averaged_run(InitialStateSpec("tfs", 0.3 * np.pi, 4), PairDistribution(1.0, 4), 3, [1, 2])
    p, pq = res[2]
    assert p.shape == (4,) and np.all(pq <= p + 1e-12)
    assert p[0] == pytest.approx(1)
