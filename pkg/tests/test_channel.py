import numpy as np
import pytest

from u1mpemba.channel import (PairDistribution, build_averaged_two_site_channel,
                              build_invariant_vector, monte_carlo_channel_check,
                              sample_layer_pairs, swap_operator, weingarten_terms,
                              InvalidSectorError)
from u1mpemba.replica import CROSSED, PARALLEL, trace_covector16
from u1mpemba.asymmetry import trace_site_covector


@pytest.fixture(scope="module")
def T():
    return build_averaged_two_site_channel()


@pytest.mark.parametrize("sign,q1,q2,norm2", [(PARALLEL, 1, -1, 1), (PARALLEL, 0, 0, 4),
                                              (CROSSED, 0, 1, 2), (CROSSED, -1, -1, 1)])
def test_invariant_vector_norm(sign, q1, q2, norm2):
    assert build_invariant_vector(sign, q1, q2).coords @ build_invariant_vector(sign, q1, q2).coords == norm2


def test_invariant_vector_degenerate_sector():
    a = build_invariant_vector(CROSSED, 1, 1).coords
    b = build_invariant_vector(PARALLEL, 1, 1).coords
    np.testing.assert_array_equal(a, b)
    with pytest.raises(InvalidSectorError):
        build_invariant_vector(PARALLEL, 2, 0)


def test_weingarten_coefficients():
    coef = {}
    for c, ket, bra in weingarten_terms():
        coef[(ket.sign, ket.q1, ket.q2, bra.sign)] = c
    assert coef[(PARALLEL, 1, -1, PARALLEL)] == 1.0
    assert coef[(PARALLEL, 0, 0, PARALLEL)] == pytest.approx(1 / 3)
    assert coef[(PARALLEL, 0, 0, CROSSED)] == pytest.approx(-1 / 6)


def test_channel_real_symmetric_bounded(T):
    t = T.two_site_tensor
    assert t.shape == (36, 36) and t.dtype == float
    np.testing.assert_allclose(t, t.T, atol=1e-15)
    assert np.max(np.abs(np.linalg.eigvals(t))) <= 1 + 1e-12


def test_unitality_both_sides(T):
    tr = np.kron(trace_site_covector(), trace_site_covector())
    np.testing.assert_allclose(tr @ T.two_site_tensor, tr, atol=1e-13)
    np.testing.assert_allclose(T.two_site_tensor @ tr, tr, atol=1e-13)
    tr16 = np.kron(trace_covector16(), trace_covector16())
    np.testing.assert_allclose(T.full @ tr16, tr16, atol=1e-13)


def _hermitian_conj(v):
    # vec(X) -> vec(X^dagger) on both replicas of both sites: swap ket/bra legs, conjugate
    t = np.asarray(v).reshape((2,) * 8)
    return t.transpose(1, 0, 3, 2, 5, 4, 7, 6).reshape(256).conj()


def test_hermiticity_preserving(T, rng):
    for _ in range(20):
        v = rng.normal(size=256) + 1j * rng.normal(size=256)
        v = v + _hermitian_conj(v)
        out = T.full @ v
        assert np.max(np.abs(out - _hermitian_conj(out))) < 1e-12


def test_site_exchange_symmetry(T):
    p = swap_operator()
    np.testing.assert_array_equal(p @ p, np.eye(36))
    np.testing.assert_allclose(p @ T.two_site_tensor @ p, T.two_site_tensor, atol=1e-15)


def test_reused_single_construction(T):
    assert build_averaged_two_site_channel() is T
    assert T.at(0, 5).two_site_tensor is T.at(2, 3).two_site_tensor


def test_monte_carlo_consistency():
    dev = monte_carlo_channel_check(100_000, seed=7)
    assert dev < 0.05
    assert monte_carlo_channel_check(1, seed=7) > 0.1


def test_monte_carlo_rate():
    devs = [np.mean([monte_carlo_channel_check(n, seed=s) for s in range(3)]) for n in (200, 20_000)]
    assert 5 <= devs[0] / devs[1] <= 20


@pytest.mark.parametrize("alpha,n", [(0.0, 4), (1.5, 12), (5.0, 8)])
def test_pair_probs_normalized(alpha, n):
    d = PairDistribution(alpha, n)
    assert sum(d.pair_probs().values()) == pytest.approx(1, abs=1e-12)
    r = d.distances.astype(float)
    ratio = d.probs * r ** alpha
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_large_alpha_nearest_neighbour(rng):
    d = PairDistribution(1e6, 10)
    assert d.probs[0] == 1.0
    pairs = sample_layer_pairs(d, rng, 1000)
    assert all(j - i == 1 for i, j in pairs)


def _chi2_ok(counts, probs):
    n = counts.sum()
    exp = n * probs
    sig = np.sqrt(exp * (1 - probs))
    return np.all(np.abs(counts - exp) < 4 * sig)


@pytest.mark.parametrize("alpha,n,draws", [(0.0, 4, 100_000), (1.5, 48, 1_000_000)])
def test_distance_histogram(alpha, n, draws):
    d = PairDistribution(alpha, n)
    pairs = np.array(sample_layer_pairs(d, np.random.default_rng(3), draws))
    r = pairs[:, 1] - pairs[:, 0]
    counts = np.bincount(r, minlength=n)[1:]
    assert _chi2_ok(counts, d.probs)
    assert pairs.min() >= 0 and pairs.max() < n


def test_placement_uniform():
    d = PairDistribution(0.0, 5)
    pairs = sample_layer_pairs(d, np.random.default_rng(11), 200_000)
    counts = {}
    for p in pairs:
        counts[p] = counts.get(p, 0) + 1
    keys = sorted(d.pair_probs())
    assert sorted(counts) == keys
    probs = np.array([d.pair_probs()[k] for k in keys])
    assert _chi2_ok(np.array([counts[k] for k in keys]), probs)


def test_layer_size(rng):
    assert len(sample_layer_pairs(PairDistribution(2.0, 9), rng)) == 9
