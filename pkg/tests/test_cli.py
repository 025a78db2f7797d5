from risxl.config import tomllib

import pytest

from risxl.cli import main
from risxl.config import save_config

from conftest import small_config


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.toml"
    save_config(small_config(mc_samples=100), path)
    return path


def test_dump_config(capsys):
    assert main(["dump-config"]) == 0
    doc = tomllib.loads(capsys.readouterr().out)
    assert doc["array"]["M_x"] == 10


def test_simulate_and_manifest(tmp_path, config_file, capsys):
    out = tmp_path / "run"
    args = ["simulate", "--config", str(config_file), "--scheme", "RPS-EPC", "--trials", "1", "--out-dir", str(out)]
    assert main(args) == 0
    assert "RPS-EPC" in capsys.readouterr().out
    again = tmp_path / "again"
    assert main(["simulate", "--manifest", str(out / "manifest.json"), "--out-dir", str(again)]) == 0
    assert (out / "records.csv").read_bytes() == (again / "records.csv").read_bytes()


def test_sweep_command(tmp_path, config_file):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(config_file), "--scheme", "RPS-EPC", "--precoder", "MRT",
                 "--trials", "1", "--sweep", "delta=0.7,0.9", "--out-dir", str(out)]) == 0
    assert (out / "delta=0.7" / "summary.csv").exists()


def test_bad_choice_exits_2(tmp_path, capsys):
    assert main(["simulate", "--scheme", "FOO", "--out-dir", str(tmp_path)]) == 2
    assert "unknown value" in capsys.readouterr().err


def test_bad_sweep_spec():
    with pytest.raises(SystemExit):
        main(["sweep", "--sweep", "Q=1,2"])


def test_validate(config_file, capsys):
    assert main(["validate", "--config", str(config_file), "--draws", "2000"]) == 0
    assert "validation passed" in capsys.readouterr().out
