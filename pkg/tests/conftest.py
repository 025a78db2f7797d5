import numpy as np
import pytest

from risxl.channels import build_channels, draw_geometry
from risxl.config import SystemConfig


def small_config(**overrides) -> SystemConfig:
    """Fast instance: 32 antennas in 4 subarrays, 2x2 RIS, 2+2 users."""
    base = dict(M_x=8, M_y=4, S=4, N_1=2, N_2=2, K_n=2, K_f=2, mc_samples=300)
    base.update(overrides)
    return SystemConfig(**base)


def make_channels(cfg: SystemConfig, seed: int = 0, theta=None):
    rng = np.random.default_rng(seed)
    geometry = draw_geometry(cfg, rng)
    return build_channels(cfg, geometry, theta=theta, rng=rng)


@pytest.fixture
def cfg():
    return small_config()


@pytest.fixture
def channels(cfg):
    return make_channels(cfg, seed=1)


def sinr_models(ch, vr=None, n_mc: int = 300, seed: int = 11) -> dict:
    """MRT, CZF and LZF statistical models of one channel set."""
    from risxl.analytics import MrtStatistics, estimate_expectations, zf_model
    from risxl.precoding import VrAssignment

    cfg = ch.cfg
    vr = vr or VrAssignment.full(cfg.K_n, cfg.K_f, cfg.S)
    return {
        "MRT": MrtStatistics.compute(ch).model(vr),
        "CZF": zf_model(ch, estimate_expectations(ch, "CZF", None, n_mc, seed=seed), vr),
        "LZF": zf_model(ch, estimate_expectations(ch, "LZF", vr, n_mc, seed=seed), vr),
    }


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
