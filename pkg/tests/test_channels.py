import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risxl.channels import (
    ChannelError, NlosSampler, Scatterer, UserGeometry, antenna_coords, array_response_ris, array_response_tx,
    cascaded_channel, nf_channel_vector, nf_element_channel, path_gain, random_phases, ris_user_channel,
)
from risxl.config import SystemConfig

from conftest import make_channels, small_config


def test_antenna_coords_corners():
    assert antenna_coords(1, 5, 3) == (-2.0, 1.0)
    assert antenna_coords(15, 5, 3) == (2.0, -1.0)


def test_antenna_coords_bijection():
    mx, my = antenna_coords(np.arange(1, 26), 5, 5)
    pairs = set(zip(mx.tolist(), my.tolist()))
    assert len(pairs) == 25
    assert pairs == {(float(x), float(y)) for x in range(-2, 3) for y in range(-2, 3)}


def test_antenna_coords_even_grid_is_centered():
    mx, my = antenna_coords(np.arange(1, 17), 4, 4)
    assert mx.sum() == 0 and my.sum() == 0
    assert set(mx.tolist()) == {-1.5, -0.5, 0.5, 1.5}


@pytest.mark.parametrize("m", [0, 16])
def test_antenna_coords_out_of_range(m):
    with pytest.raises(ChannelError):
        antenna_coords(m, 5, 3)


def test_broadside_gain():
    lam = 0.06
    eta = path_gain([0, 0, 10.0], 0.0, 0.0, lam, lam / 2)
    area = lam**2 / (4 * math.pi)
    assert eta == pytest.approx(area / (4 * math.pi * 100.0), rel=1e-12)
    assert eta == pytest.approx(2.2797e-7, rel=1e-4)
    g = nf_element_channel([0, 0, 10.0], 0.0, 0.0, lam)
    assert abs(g) ** 2 == pytest.approx(eta, rel=1e-12)


def test_nonpositive_z_rejected():
    with pytest.raises(ChannelError):
        path_gain([0, 0, 0.0], 0.0, 0.0, 0.06, 0.03)


def test_single_element_vector():
    cfg = SystemConfig(M_x=1, M_y=1, S=1)
    u = np.array([1.0, 2.0, 5.0])
    assert nf_channel_vector(u, cfg)[0] == nf_element_channel(u, 0.0, 0.0, cfg.wavelength, cfg.d)


def test_los_norm_is_sum_of_gains():
    cfg = SystemConfig(M_x=5, M_y=5, S=1)
    u = np.array([3.0, -1.0, 4.0])
    mx, my = antenna_coords(np.arange(1, 26), 5, 5)
    g = nf_channel_vector(u, cfg)
    assert np.vdot(g, g).real == pytest.approx(path_gain(u, mx, my, cfg.wavelength, cfg.d).sum(), rel=1e-12)


def test_scatterer_adds_path():
    cfg = SystemConfig(M_x=5, M_y=5, S=1)
    u = np.array([3.0, -1.0, 4.0])
    sc = Scatterer(np.array([1.0, 1.0, 2.0]), 0.3 + 0.1j)
    g0 = nf_channel_vector(u, cfg)
    g1 = nf_channel_vector(u, cfg, [sc])
    assert not np.allclose(g0, g1)
    np.testing.assert_allclose(g1 - g0, nf_channel_vector(sc.position, cfg) * sc.beta)


def test_steering_vectors_at_zero_angle():
    np.testing.assert_allclose(array_response_tx(0.0, 0.0, 4, 3), np.ones(12))
    np.testing.assert_allclose(array_response_ris(0.0, 0.0, 3, 3), np.ones(9))


@settings(max_examples=30, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-math.pi / 2, math.pi / 2))
def test_steering_unit_modulus(az, el):
    a = array_response_tx(az, el, 4, 3)
    np.testing.assert_allclose(np.abs(a), 1.0)


def test_ris_user_channel():
    cfg = SystemConfig(N_1=3, N_2=3)
    h = ris_user_channel(cfg, (0.0, 0.0))
    np.testing.assert_allclose(h, math.sqrt(cfg.varsigma) * np.ones(9))
    h = ris_user_channel(cfg, (0.4, -0.2))
    assert np.vdot(h, h).real == pytest.approx(cfg.varsigma * 9)


def test_ricean_limit():
    cfg = SystemConfig(ricean_factor=math.inf)
    assert cfg.beta2 == 0.0 and cfg.alpha2 == pytest.approx(math.sqrt(cfg.zeta))


def test_los_matrix_is_rank_one(channels):
    cfg = channels.cfg
    b = array_response_ris(*channels.geometry.ris_aoa, cfg.N_1, cfg.N_2)
    a = array_response_tx(*channels.geometry.xl_aod, cfg.M_x, cfg.M_y)
    np.testing.assert_allclose(channels.H2_los, np.outer(b, a.conj()))
    assert np.linalg.matrix_rank(channels.H2_los) == 1


def test_nlos_variance():
    draws = list(NlosSampler(4, 10_000, 2, 4, chunk=2000))
    X = np.concatenate(draws)
    stat = np.mean(np.sum(np.abs(X) ** 2, axis=(1, 2)) / 8)
    assert stat == pytest.approx(1.0, rel=0.02)


def test_sampler_replays():
    a = np.concatenate(list(NlosSampler(7, 30, 2, 3, chunk=7)))
    b = np.concatenate(list(NlosSampler(7, 30, 2, 3, chunk=7)))
    np.testing.assert_array_equal(a, b)


def test_second_moment_of_h2(channels):
    # E{H2 H2^H} = α²H̄H̄^H + β² M I, checked by Monte Carlo
    cfg = channels.cfg
    acc = np.zeros((cfg.N, cfg.N), complex)
    n = 4000
    for nlos in NlosSampler(11, n, cfg.N, cfg.M):
        H2 = channels.alpha2 * channels.H2_los + channels.beta2 * nlos
        acc += np.einsum("bnm,bkm->nk", H2, H2.conj())
    emp = acc / n
    exact = channels.alpha2**2 * channels.H2_los @ channels.H2_los.conj().T + channels.beta2**2 * cfg.M * np.eye(cfg.N)
    assert np.max(np.abs(emp - exact)) <= 0.05 * np.max(np.abs(exact))


def test_cascaded_single_element():
    H2 = np.array([[1.0 + 2.0j, -0.5j, 3.0]])
    h = np.array([0.3 - 0.4j])
    np.testing.assert_allclose(cascaded_channel([0.0], H2, h), h.conj() * H2[0])


def test_cascaded_subarray_concatenation(channels):
    cfg = channels.cfg
    rng = np.random.default_rng(2)
    nlos = (rng.standard_normal((cfg.N, cfg.M)) + 1j * rng.standard_normal((cfg.N, cfg.M))) / math.sqrt(2)
    H2 = channels.H2(nlos)
    full = cascaded_channel(channels.theta, H2, channels.h[0])
    parts = [cascaded_channel(channels.theta, H2, channels.h[0], s, cfg.M_star) for s in range(cfg.S)]
    np.testing.assert_allclose(np.concatenate(parts), full)
    # ChannelSet.cascaded uses the same convention
    np.testing.assert_allclose(channels.cascaded(nlos)[0], full)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_cascaded_common_phase_invariance(phi):
    cfg = small_config()
    ch = make_channels(cfg, 3)
    rng = np.random.default_rng(0)
    H2 = ch.H2(rng.standard_normal((cfg.N, cfg.M)) + 0j)
    w = rng.standard_normal(cfg.M) + 1j * rng.standard_normal(cfg.M)
    a = abs(cascaded_channel(ch.theta, H2, ch.h[1]) @ w)
    b = abs(cascaded_channel(ch.theta + phi, H2, ch.h[1]) @ w)
    assert a == pytest.approx(b, rel=1e-10)


def test_random_phases_statistics():
    rng = np.random.default_rng(0)
    th = random_phases(rng, 100_000)
    assert np.all((th >= 0) & (th < 2 * math.pi))
    z = np.exp(1j * th)
    se = 1 / math.sqrt(2 * th.size)
    assert abs(z.mean().real) <= 3 * se and abs(z.mean().imag) <= 3 * se
    np.testing.assert_array_equal(th, random_phases(np.random.default_rng(0), 100_000))


def test_geometry_validation():
    with pytest.raises(ChannelError):
        UserGeometry(np.array([[0, 0, -1.0]]), np.zeros((1, 2)), (0, 0), (0, 0), 100.0, 20.0)
    with pytest.raises(ChannelError):
        UserGeometry(np.array([[0, 0, 1.0]]), np.array([[4.0, 0.0]]), (0, 0), (0, 0), 100.0, 20.0)


def test_with_phases_checks_length(channels):
    with pytest.raises(ChannelError):
        channels.with_phases(np.zeros(channels.cfg.N + 1))
