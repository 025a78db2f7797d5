import itertools
import math

import numpy as np
import pytest

from risxl.channels import NlosSampler
from risxl.phase import (
    PhaseError, PhaseProblem, build_Rk, channel_gains, heuristic_phases, phase_problem, rank_residual, run_penalty,
    solve_inner,
)
from risxl.precoding import VrAssignment

from conftest import make_channels, small_config


def _random_problem(K, N, seed, rank=2):
    rng = np.random.default_rng(seed)
    R = []
    for _ in range(K):
        G = rng.standard_normal((N, rank)) + 1j * rng.standard_normal((N, rank))
        R.append(G @ G.conj().T)
    return np.array(R)


def test_single_element_is_forced():
    R = np.array([[[2.0]], [[3.5]]], dtype=complex)
    sol = run_penalty(PhaseProblem(R))
    assert sol.V[0, 0] == pytest.approx(1.0)
    assert sol.t == pytest.approx(2.0)


def test_relaxation_bounds_rank_one_points():
    prob = PhaseProblem(_random_problem(2, 5, 1))
    V, t_scaled, _ = solve_inner(prob, np.eye(5, dtype=complex), penalty=0.0, max_iter=1)
    t_sdp = t_scaled * prob.scale
    rng = np.random.default_rng(2)
    for _ in range(200):
        theta = rng.uniform(0, 2 * math.pi, 5)
        assert np.min(channel_gains(prob.R, theta)) <= t_sdp * (1 + 1e-6)


def test_single_user_matches_phase_grid():
    R = _random_problem(1, 3, 3)
    sol = run_penalty(PhaseProblem(R), rng=np.random.default_rng(0))
    levels = 2 * math.pi * np.arange(16) / 16
    grid = max(channel_gains(R, np.array([0.0, a, b]))[0] for a, b in itertools.product(levels, levels))
    assert sol.t >= 0.98 * grid
    # the grid is a lower bound of the continuous optimum; the SDP value an upper bound
    assert sol.t_sdp >= grid * (1 - 1e-6)


def test_two_users_eight_elements_converge():
    prob = PhaseProblem(_random_problem(2, 8, 4), I1=30, I2=30)
    sol = run_penalty(prob, rng=np.random.default_rng(1))
    assert sol.converged and sol.residual <= 1e-4
    assert sol.outer <= 7
    # penalized objective within each outer round never drops
    for outer in range(sol.outer + 1):
        obj = [r["objective"] for r in sol.trace if r["outer"] == outer]
        if len(obj) > 1:
            assert np.all(np.diff(obj) >= -1e-8 * max(1.0, max(map(abs, obj))))
    assert sol.t >= 0.95 * sol.t_sdp


def test_rank_one_start_needs_no_scaling():
    # one user with a rank-one R: the relaxation is tight at v = e^{j∠g}
    g = np.exp(1j * np.random.default_rng(0).uniform(0, 2 * math.pi, 4)) * np.array([1.0, 2.0, 0.5, 1.5])
    prob = PhaseProblem(np.outer(g, g.conj())[None])
    v = np.exp(1j * np.angle(g))
    V0 = np.outer(v, v.conj())
    assert rank_residual(V0) == pytest.approx(0.0, abs=1e-12)
    sol = run_penalty(prob, V0=V0)
    assert sol.outer == 0 and sol.converged
    assert sol.t == pytest.approx(np.sum(np.abs(g)) ** 2, rel=1e-6)


def test_extraction_loss_small_instances():
    for seed in range(3):
        sol = run_penalty(PhaseProblem(_random_problem(2, 4, 10 + seed)), rng=np.random.default_rng(seed))
        assert sol.t >= 0.95 * sol.t_sdp


def test_rejects_bad_inputs():
    with pytest.raises(PhaseError):
        PhaseProblem(np.array([[[1.0, 1.0], [0.0, 1.0]]]))
    with pytest.raises(PhaseError):
        run_penalty(PhaseProblem(_random_problem(1, 2, 0)), V0=2 * np.eye(2))


def test_rk_matches_sample_gain(channels):
    cfg = channels.cfg
    mask = np.array([True, False, True, True])
    R = build_Rk(channels, 0, mask)
    gain = channel_gains(R[None], channels.theta)[0]
    cols = np.repeat(mask, cfg.M_star)
    vals = []
    for nlos in NlosSampler(3, 10_000, cfg.N, cfg.M):
        g = channels.cascaded(nlos)[:, 0, :]
        vals.append(np.sum(np.abs(g[:, cols]) ** 2, axis=1))
    vals = np.concatenate(vals)
    assert abs(vals.mean() - gain) <= 3 * vals.std(ddof=1) / math.sqrt(vals.size)
    # trace of the selection matrix counts active antennas
    assert cols.sum() == cfg.M_star * mask.sum()


def test_rk_single_element_by_hand():
    cfg = small_config(N_1=1, N_2=1)
    ch = make_channels(cfg, 0)
    mask = np.array([True, True, False, False])
    cols = np.repeat(mask, cfg.M_star)
    hand = abs(ch.h[0, 0]) ** 2 * (ch.alpha2**2 * np.sum(np.abs(ch.H2_los[0, cols]) ** 2) + ch.beta2**2 * cols.sum())
    assert build_Rk(ch, 0, mask)[0, 0].real == pytest.approx(hand, rel=1e-12)
    with pytest.raises(PhaseError):
        build_Rk(ch, 0, np.zeros(4, bool))


def test_heuristic_zero_phases():
    cfg = small_config(ris_aoa=(0.0, 0.0), ffue_azimuths=(0.0, 0.5))
    ch = make_channels(cfg, 0)
    np.testing.assert_allclose(np.mod(heuristic_phases(ch, 0) + 1e-12, 2 * math.pi), 1e-12, atol=1e-9)


def test_heuristic_alignment():
    from risxl.channels import array_response_ris
    rng = np.random.default_rng(0)
    wins = 0
    for trial in range(100):
        az = tuple(rng.uniform(-math.pi / 2, math.pi / 2, 2))
        cfg = small_config(N_1=4, N_2=4, ffue_azimuths=az, ffue_elevation=float(rng.uniform(-0.5, 0.5)))
        ch = make_channels(cfg, trial)
        theta = heuristic_phases(ch, 0)
        b = array_response_ris(*ch.geometry.ris_aoa, cfg.N_1, cfg.N_2)
        amp = np.abs(ch.h.conj() * np.exp(1j * theta) @ b)
        assert amp[0] == pytest.approx(np.sum(np.abs(ch.h[0]) * np.abs(b)), rel=1e-12)
        wins += amp[1] < amp[0]
    assert wins == 100


def test_phase_problem_uses_far_vrs(channels):
    cfg = channels.cfg
    vr = VrAssignment.from_sets([(0,), (1,)], [(0, 1), (3,)], cfg.S)
    prob = phase_problem(channels, vr)
    np.testing.assert_allclose(prob.R[1], build_Rk(channels, 1, vr.far[1]))
    assert prob.I1 == cfg.I1 and prob.eps == cfg.eps_rank
