import pytest

from risxl.config import ConfigError, SystemConfig, config_from_dict, dumps_config, load_config, profile, save_config


def test_desk_profile_sizes():
    cfg = profile("desk")
    assert (cfg.M, cfg.S, cfg.M_star, cfg.N, cfg.K) == (100, 4, 25, 16, 4)


def test_paper_profile_sizes():
    cfg = profile("paper")
    assert cfg.M == 400 and cfg.N == 100 and cfg.K == 10


def test_unknown_profile():
    with pytest.raises(ConfigError):
        profile("huge")


def test_ricean_split():
    cfg = SystemConfig(ricean_factor=2.0)
    assert cfg.alpha2**2 / cfg.zeta == pytest.approx(2 / 3)
    assert cfg.beta2**2 / cfg.zeta == pytest.approx(1 / 3)


def test_ris_user_pathloss():
    assert SystemConfig().varsigma == pytest.approx(1e-3 * 20.0**-2)


def test_toml_roundtrip(tmp_path):
    cfg = SystemConfig(M_x=6, M_y=4, S=2, qos_near=(1.0, 2.0), qos_far=(0.5, 0.5), ffue_azimuths=(0.1, 0.2))
    path = tmp_path / "c.toml"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert dumps_config(load_config(path)) == dumps_config(cfg)


def test_unknown_key():
    with pytest.raises(ConfigError):
        config_from_dict({"array": {"M_z": 3}})


@pytest.mark.parametrize("bad", [dict(S=3), dict(K_n=-1), dict(vr_ratio=0.0), dict(I3=0), dict(M_x=0)])
def test_invalid_values(bad):
    with pytest.raises(ConfigError):
        SystemConfig(**bad)


def test_hash_tracks_content():
    a, b = SystemConfig(), SystemConfig(seed=1)
    assert a.config_hash() == SystemConfig().config_hash()
    assert a.config_hash() != b.config_hash()
