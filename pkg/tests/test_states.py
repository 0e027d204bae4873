import numpy as np
import pytest

from u1mpemba.asymmetry import build_swap_boundary, product_overlap, purities
from u1mpemba.replica import BASIS
from u1mpemba.states import (InitialStateSpec, ParityError, build_initial_state, local_states,
                             replicated_site_vector16, ry, single_site_replica_vector)


def test_rotation_convention():
    th = 0.7
    np.testing.assert_allclose(ry(th) @ [1, 0], [np.cos(th / 2), np.sin(th / 2)])
    np.testing.assert_allclose(ry(th) @ ry(-th), np.eye(2), atol=1e-15)


def test_up_state_is_index_zero():
    v = single_site_replica_vector(np.array([1.0, 0.0]))
    np.testing.assert_allclose(BASIS.embed(v), np.eye(16)[0])


def test_plus_state_entries():
    v16 = replicated_site_vector16(ry(np.pi / 2) @ [1, 0])
    np.testing.assert_allclose(v16, np.full(16, 0.25))


def test_rejects_unnormalized():
    with pytest.raises(ValueError):
        single_site_replica_vector(np.array([1.0, 1.0]))


@pytest.mark.parametrize("theta", np.linspace(0, np.pi / 2, 7))
def test_restriction_keeps_all_observables(theta):
    # the dropped part is killed by the trace and swap co-vectors of one site
    from u1mpemba.replica import swap_covector16, trace_covector16
    v16 = replicated_site_vector16(ry(theta) @ [1, 0])
    coords = single_site_replica_vector(ry(theta) @ [1, 0])
    rest = v16 - BASIS.embed(coords)
    assert abs(trace_covector16() @ rest) < 1e-15
    assert abs(swap_covector16() @ rest) < 1e-15


@pytest.mark.parametrize("family,bits", [("tfs", [0, 0, 0, 0]), ("tns", [0, 1, 0, 1]),
                                         ("tdws", [0, 0, 1, 1])])
def test_zero_tilt_patterns(family, bits):
    state = build_initial_state(InitialStateSpec(family, 0.0, 4))
    for v, b in zip(state.site_vectors, bits):
        np.testing.assert_allclose(BASIS.embed(v), np.eye(16)[0 if b == 0 else 15], atol=1e-15)


@pytest.mark.parametrize("family", ["tns", "tdws"])
def test_parity(family):
    with pytest.raises(ParityError):
        InitialStateSpec(family, 0.3, 5)


@pytest.mark.parametrize("theta", [-0.1, 2.0])
def test_theta_range(theta):
    with pytest.raises(ValueError):
        InitialStateSpec("tfs", theta, 4)


@pytest.mark.parametrize("family", ["tfs", "tns", "tdws"])
@pytest.mark.parametrize("theta", [0.2 * np.pi, 0.4 * np.pi, np.pi / 2])
def test_unit_purity_at_t0(family, theta):
    state = build_initial_state(InitialStateSpec(family, theta, 6))
    for n_a in range(1, 7):
        b = build_swap_boundary(6, n_a)
        assert product_overlap(b.site_vectors, state.site_vectors) == pytest.approx(1, abs=1e-12)


def test_theta_continuity():
    h = 1e-6
    for th in np.linspace(0.1, 1.4, 6):
        a = single_site_replica_vector(ry(th) @ [1, 0])
        b = single_site_replica_vector(ry(th + h) @ [1, 0])
        assert np.linalg.norm(b - a) / h < 2.0


def test_local_states_tns_start_up():
    s = local_states(InitialStateSpec("tns", 0.3, 4))
    np.testing.assert_allclose(s[0], ry(0.3)[:, 0])
    np.testing.assert_allclose(s[1], ry(0.3)[:, 1])


def test_channel_annihilates_dropped_part(rng):
    from u1mpemba.channel import build_averaged_two_site_channel
    full = build_averaged_two_site_channel().full
    v16 = replicated_site_vector16(ry(0.9) @ [1, 0])
    rest = v16 - BASIS.embed(BASIS.restrict(v16)[0])
    assert np.linalg.norm(rest) > 0.1
    other = rng.normal(size=16)
    for vec in (np.kron(rest, other), np.kron(other, rest)):
        assert np.max(np.abs(full @ vec)) < 1e-14
