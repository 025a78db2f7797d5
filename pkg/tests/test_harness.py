import filecmp
import json

import numpy as np
import pytest

import risxl.harness as harness
from risxl.config import ConfigError
from risxl.harness import (
    ExperimentPlan, ExperimentResult, HarnessError, apply_sweep, emit_reports, load_manifest, run_pipeline, run_plan,
    run_trial,
)
from risxl.power import PowerControlError

from conftest import small_config

CFG = small_config(mc_samples=150, I3=10)


@pytest.fixture(scope="module")
def result():
    return run_pipeline(CFG, ExperimentPlan(trials=2, seed=3))


def test_trial_is_reproducible():
    plan = ExperimentPlan(trials=1, seed=5)
    a, b = run_trial(CFG, plan, 0), run_trial(CFG, plan, 0)
    assert a.failure is None
    assert a.records == b.records
    assert a.vr_rows == b.vr_rows


def test_records_cover_plan(result):
    assert not result.failures
    for scheme in result.plan.schemes:
        for p in result.plan.precoders:
            assert len(result.select(scheme, p)) == 2
    for r in result.select("OPS-OPC", "CZF"):
        assert r.iterations >= 0 and r.power_fraction <= 1 + 1e-6
    for r in result.select("RPS-EPC", "MRT"):
        assert r.iterations == 0


def test_rps_only_skips_optimizers(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("optimizer called")

    monkeypatch.setattr(harness, "run_penalty", boom)
    monkeypatch.setattr(harness, "sca_solve", boom)
    res = run_pipeline(CFG, ExperimentPlan(schemes=("RPS-EPC",), trials=1))
    assert not res.failures and len(res.records) == 3
    assert not res.sca_traces and not res.phase_traces


def test_failures_are_recorded(monkeypatch):
    def fail(*a, **k):
        raise PowerControlError("synthetic")

    monkeypatch.setattr(harness, "sca_solve", fail)
    res = run_pipeline(CFG, ExperimentPlan(schemes=("OPS-OPC",), precoders=("LZF",), trials=1))
    assert res.failures == [{"trial": 0, "stage": "power-LZF", "error": "PowerControlError: synthetic"}]
    assert res.records == []


def test_vr_thresholds_hold(result):
    for row in result.vr_rows:
        assert row["final_sinr"] >= row["threshold"]


def test_cdf_is_monotone(result):
    x, F = result.cdf("OPS-OPC", "MRT")
    assert np.all(np.diff(x) >= 0) and np.all(np.diff(F) > 0) and F[-1] == 1.0


def test_paired_alignment(result):
    a, b = result.paired("OPS-OPC", "RPS-EPC", "CZF")
    assert a.shape == b.shape == (2,)


def test_empty_result_writes_headers(tmp_path):
    res = ExperimentResult(CFG, ExperimentPlan(trials=1))
    emit_reports(res, tmp_path)
    assert (tmp_path / "records.csv").read_text().count("\n") == 1
    assert (tmp_path / "cdf.csv").read_text() == "scheme,precoder,metric,value,cdf\n"


def test_manifest_rerun_is_byte_identical(tmp_path):
    plan = ExperimentPlan(schemes=("RPS-EPC", "HPS-EPC"), trials=2, seed=9)
    first = emit_reports(run_plan(CFG, plan), tmp_path / "a")
    cfg, plan2 = load_manifest(first)
    assert cfg == CFG and plan2 == plan
    second = emit_reports(run_plan(cfg, plan2), tmp_path / "b")
    files = json.loads(first.read_text())["files"]
    assert set(files) >= {"records.csv", "summary.csv", "vr.csv"}
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", list(files) + ["manifest.json"],
                                               shallow=False)
    assert not mismatch and not errors


def test_sweep_reports(tmp_path):
    plan = ExperimentPlan(schemes=("RPS-EPC",), precoders=("MRT",), trials=1, sweep_axis="P", sweep_values=(20.0, 30.0))
    results = run_plan(CFG, plan)
    assert [r.config.tx_power_dbm for r in results] == [20.0, 30.0]
    manifest = emit_reports(results, tmp_path)
    assert (tmp_path / "P=20.0" / "records.csv").exists()
    assert (tmp_path / "sweep.csv").read_text().count("\n") == 3
    cfg, _ = load_manifest(manifest)
    assert cfg == CFG


def test_apply_sweep():
    base = small_config(M_x=8, M_y=8, S=4)  # M* = 16
    cfg = apply_sweep(base, "M", 256)
    assert (cfg.M, cfg.M_star, cfg.S) == (256, 16, 16)
    assert apply_sweep(base, "weights", 0.3).w_f == pytest.approx(0.7)
    assert apply_sweep(base, "delta", 0.7).vr_ratio == 0.7
    with pytest.raises(ConfigError):
        apply_sweep(base, "M", 100)
    with pytest.raises(HarnessError):
        apply_sweep(base, "N", 4)


@pytest.mark.parametrize("bad", [dict(trials=0), dict(schemes=("XX",)), dict(sweep_axis="M"), dict(workers=0)])
def test_plan_validation(bad):
    with pytest.raises(HarnessError):
        ExperimentPlan(**bad)


def test_malformed_manifest(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{}")
    with pytest.raises(HarnessError):
        load_manifest(p)
