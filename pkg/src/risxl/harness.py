"""Experiment orchestration: per-trial pipeline, sweeps and CSV reports.

Each trial draws a geometry, selects visibility regions on random phases,
and then evaluates three schemes on the same channels:

* ``RPS-EPC``: random phases, equal power;
* ``HPS-EPC``: phases aligned to the first far-field user, equal power;
* ``OPS-OPC``: penalty-SDP phases and SCA power control with per-user QoS
  floors equal to the smallest RPS-EPC SE over the three precoders.

All randomness of trial ``i`` comes from ``SeedSequence([seed, i])``, so a
trial is reproducible on its own and paired across schemes and sweep points.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analytics import AnalyticsError, MrtStatistics, SinrModel, estimate_expectations, se_report, zf_model
from .channels import ChannelError, ChannelSet, build_channels, draw_geometry, random_phases
from .config import ConfigError, SystemConfig, config_from_dict
from .conic import ConicError
from .phase import PhaseError, heuristic_phases, phase_problem, run_penalty
from .power import PowerControlError, sca_solve
from .precoding import PrecodingError, VrAssignment
from .vr import VrSelectionError, select_vrs, vr_efficiency

SCHEMES = ("OPS-OPC", "RPS-EPC", "HPS-EPC")
PRECODERS = ("MRT", "CZF", "LZF")
SWEEP_AXES = ("M", "delta", "weights", "P")

# failures of a single trial that are recorded instead of aborting the run
TRIAL_ERRORS = (
    AnalyticsError, ChannelError, ConfigError, ConicError, PhaseError, PowerControlError,
    PrecodingError, VrSelectionError, np.linalg.LinAlgError, ArithmeticError,
)


class HarnessError(ValueError):
    """Invalid experiment plan or report request."""


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run: schemes, precoders, trial count, seed and an optional sweep."""

    schemes: tuple = SCHEMES
    precoders: tuple = PRECODERS
    trials: int = 10
    seed: int = 0
    sweep_axis: Optional[str] = None
    sweep_values: tuple = ()
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "precoders", tuple(self.precoders))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        if self.trials < 1:
            raise HarnessError("trials must be at least 1")
        if not self.schemes or set(self.schemes) - set(SCHEMES):
            raise HarnessError(f"schemes must be drawn from {SCHEMES}")
        if not self.precoders or set(self.precoders) - set(PRECODERS):
            raise HarnessError(f"precoders must be drawn from {PRECODERS}")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise HarnessError(f"sweep axis must be one of {SWEEP_AXES}")
            if not self.sweep_values:
                raise HarnessError("a sweep needs at least one value")
        if self.workers < 1:
            raise HarnessError("workers must be at least 1")

    def to_dict(self) -> dict:
        return {
            "schemes": list(self.schemes),
            "precoders": list(self.precoders),
            "trials": self.trials,
            "seed": self.seed,
            "sweep_axis": self.sweep_axis,
            "sweep_values": list(self.sweep_values),
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        return cls(**data)


@dataclass
class TrialRecord:
    """Outcome of one (trial, scheme, precoder) evaluation."""

    trial: int
    scheme: str
    precoder: str
    objective: float
    se_near_min: float
    se_far_min: float
    se: tuple  # per-user SEs, near-field first
    omega: float  # active fraction of this precoder's VRs
    iterations: int = 0  # SCA iterations (0 for equal power)
    stop_reason: str = ""
    qos_met: bool = True
    qos_violation: float = 0.0
    power_fraction: float = 1.0
    phase_converged: bool = True
    phase_residual: float = 0.0
    phase_solves: int = 0


@dataclass
class TrialOutput:
    trial: int
    records: list = field(default_factory=list)
    vr_rows: list = field(default_factory=list)
    sca_traces: list = field(default_factory=list)
    phase_traces: list = field(default_factory=list)
    failure: Optional[dict] = None
    wall_time: float = 0.0


@dataclass
class ExperimentResult:
    """All trials of one configuration."""

    config: SystemConfig
    plan: ExperimentPlan
    records: list = field(default_factory=list)
    vr_rows: list = field(default_factory=list)
    sca_traces: list = field(default_factory=list)
    phase_traces: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    sweep_value: object = None
    base_config: Optional[SystemConfig] = None  # unswept config of a sweep point

    def select(self, scheme: str, precoder: str) -> list:
        return [r for r in self.records if r.scheme == scheme and r.precoder == precoder]

    def values(self, scheme: str, precoder: str, metric: str = "objective") -> np.ndarray:
        """Trial-ordered metric values; failed trials are absent."""
        return np.array([getattr(r, metric) for r in self.select(scheme, precoder)], dtype=float)

    def paired(self, scheme_a: str, scheme_b: str, precoder: str, metric: str = "objective"):
        """Metric pairs for trials where both schemes succeeded."""
        a = {r.trial: getattr(r, metric) for r in self.select(scheme_a, precoder)}
        b = {r.trial: getattr(r, metric) for r in self.select(scheme_b, precoder)}
        common = sorted(set(a) & set(b))
        return np.array([a[t] for t in common]), np.array([b[t] for t in common])

    def cdf(self, scheme: str, precoder: str, metric: str = "objective"):
        """Empirical CDF (sorted samples, F = i/n)."""
        x = np.sort(self.values(scheme, precoder, metric))
        return x, np.arange(1, x.size + 1) / max(x.size, 1)

    def omega(self, precoder: str) -> float:
        """Mean VR efficiency over successful trials."""
        vals = [r.omega for r in self.records if r.precoder == precoder and r.scheme == self.plan.schemes[0]]
        return float(np.mean(vals)) if vals else math.nan


# ---------------------------------------------------------------------------
# configuration sweeps


def apply_sweep(cfg: SystemConfig, axis: str, value) -> SystemConfig:
    """Config for one sweep point.

    ``M`` grows the array along x with ``M_y`` and the subarray size fixed,
    so the number of subarrays scales with M. ``delta`` is the VR ratio,
    ``weights`` the near-field weight (far weight ``1 − w_n``) and ``P`` the
    transmit power in dBm.
    """
    if axis == "M":
        M = int(value)
        if M % cfg.M_y or M % cfg.M_star:
            raise ConfigError(f"M={M} must be a multiple of M_y={cfg.M_y} and of the subarray size {cfg.M_star}")
        return cfg.replace(M_x=M // cfg.M_y, S=M // cfg.M_star)
    if axis == "delta":
        return cfg.replace(vr_ratio=float(value))
    if axis == "weights":
        return cfg.replace(w_n=float(value), w_f=1.0 - float(value))
    if axis == "P":
        return cfg.replace(tx_power_dbm=float(value))
    raise HarnessError(f"unknown sweep axis {axis!r}")


# ---------------------------------------------------------------------------
# per-trial pipeline


class _Evaluator:
    """SINR models for one trial, cached per (phase label, precoder, VR)."""

    def __init__(self, cfg: SystemConfig, mc_seed: int):
        self.cfg = cfg
        self.mc_seed = mc_seed
        self._cache: dict = {}

    def expectations(self, channels: ChannelSet, label: str, kind: str, vr: Optional[VrAssignment]):
        key = ("cache", label, kind, None if vr is None else (vr.near.tobytes(), vr.far.tobytes()))
        if key not in self._cache:
            # the same seed for every cache gives common random numbers
            self._cache[key] = estimate_expectations(channels, kind, vr, self.cfg.mc_samples, seed=self.mc_seed)
        return self._cache[key]

    def model(self, channels: ChannelSet, label: str, precoder: str, vr: VrAssignment) -> SinrModel:
        if precoder == "MRT":
            key = ("mrt", label)
            if key not in self._cache:
                self._cache[key] = MrtStatistics.compute(channels)
            return self._cache[key].model(vr)
        cache = self.expectations(channels, label, precoder, vr if precoder == "LZF" else None)
        return zf_model(channels, cache, vr)


def _se_record(trial, scheme, precoder, sinr, cfg, vr, **extra) -> TrialRecord:
    n = cfg.K_n
    rep = se_report(sinr[:n], sinr[n:], (cfg.w_n, cfg.w_f))
    return TrialRecord(
        trial=trial,
        scheme=scheme,
        precoder=precoder,
        objective=float(rep.objective),
        se_near_min=float(rep.min_near),
        se_far_min=float(rep.min_far),
        se=tuple(float(v) for v in rep.per_user()),
        omega=vr_efficiency(vr),
        **extra,
    )


def trial_seeds(seed: int, trial: int) -> dict:
    """Independent streams of one trial: geometry, random phases, Monte Carlo, SDP start."""
    geo, ph, mc, sdp = np.random.SeedSequence([seed, trial]).spawn(4)
    return {"geometry": geo, "phases": ph, "mc": int(mc.generate_state(1)[0]), "sdp": sdp}


def run_trial(cfg: SystemConfig, plan: ExperimentPlan, trial: int) -> TrialOutput:
    """Full pipeline of one trial; stage errors are captured in ``failure``."""
    start = time.perf_counter()
    out = TrialOutput(trial)
    stage = "geometry"
    try:
        seeds = trial_seeds(plan.seed, trial)
        geometry = draw_geometry(cfg, np.random.default_rng(seeds["geometry"]))
        theta0 = random_phases(np.random.default_rng(seeds["phases"]), cfg.N)
        base = build_channels(cfg, geometry, theta=theta0)
        ev = _Evaluator(cfg, seeds["mc"])
        weights = (cfg.w_n, cfg.w_f)

        stage = "vr-selection"
        selections = {}
        for kind in sorted({"MRT" if p == "MRT" else "CZF" for p in PRECODERS}):
            cache = ev.expectations(base, "random", "CZF", None) if kind == "CZF" else None
            sel = select_vrs(base, kind, cfg.vr_ratio, cache=cache)
            selections[kind] = sel
            for u, mask in enumerate(sel.vr.all_masks()):
                out.vr_rows.append({
                    "trial": trial, "kind": kind, "user": u,
                    "group": "near" if u < cfg.K_n else "far",
                    "subarrays": " ".join(str(s + 1) for s in np.flatnonzero(mask)),
                    "baseline_sinr": float(sel.baseline[u]),
                    "threshold": float(sel.thresholds[u]),
                    "final_sinr": float(sel.final[u]),
                    "evaluations": int(sel.evaluations[u]),
                })
        vrs = {p: selections["MRT" if p == "MRT" else "CZF"].vr for p in PRECODERS}

        stage = "rps-epc"
        rps_se = {}
        for p in PRECODERS:
            m = ev.model(base, "random", p, vrs[p])
            sinr = m.sinr(m.equal_amplitudes(cfg.P))
            rps_se[p] = np.log2(1 + sinr)
            if "RPS-EPC" in plan.schemes and p in plan.precoders:
                out.records.append(_se_record(trial, "RPS-EPC", p, sinr, cfg, vrs[p]))
        if cfg.qos_near is not None and cfg.qos_far is not None:
            qos = np.concatenate([cfg.qos_near, cfg.qos_far]).astype(float)
        else:
            qos = np.min(np.array([rps_se[p] for p in PRECODERS]), axis=0)

        if "HPS-EPC" in plan.schemes:
            stage = "hps-epc"
            hch = base.with_phases(heuristic_phases(base, 0))
            for p in plan.precoders:
                m = ev.model(hch, "heuristic", p, vrs[p])
                out.records.append(_se_record(trial, "HPS-EPC", p, m.sinr(m.equal_amplitudes(cfg.P)), cfg, vrs[p]))

        if "OPS-OPC" in plan.schemes:
            phase_solutions = {}
            for p in plan.precoders:
                vr = vrs[p]
                stage = f"phase-{p}"
                key = vr.far.tobytes()
                if key not in phase_solutions:
                    sol = run_penalty(phase_problem(base, vr), rng=np.random.default_rng(seeds["sdp"]))
                    phase_solutions[key] = sol
                    for row in sol.trace:
                        out.phase_traces.append({"trial": trial, "precoder": p, **row})
                sol = phase_solutions[key]
                och = base.with_phases(sol.theta)
                stage = f"power-{p}"
                m = ev.model(och, f"optimized-{key.hex()}", p, vr)
                res = sca_solve(m, cfg.P, weights, qos=qos, eps=cfg.eps_sca, max_iter=cfg.I3)
                for row in res.trace:
                    out.sca_traces.append({"trial": trial, "precoder": p, **row})
                out.records.append(_se_record(
                    trial, "OPS-OPC", p, res.sinr, cfg, vr,
                    iterations=res.iterations, stop_reason=res.stop_reason, qos_met=res.qos_met,
                    qos_violation=res.qos_violation, power_fraction=res.power_fraction,
                    phase_converged=sol.converged, phase_residual=sol.residual, phase_solves=sol.inner,
                ))
    except TRIAL_ERRORS as exc:
        out.failure = {"trial": trial, "stage": stage, "error": f"{type(exc).__name__}: {exc}"}
        out.records, out.sca_traces, out.phase_traces = [], [], []
    out.wall_time = time.perf_counter() - start
    return out


def _run_trial_args(args):
    return run_trial(*args)


def run_pipeline(config: SystemConfig, plan: ExperimentPlan) -> ExperimentResult:
    """Run every trial of ``plan`` on ``config`` (no sweep)."""
    jobs = [(config, plan, t) for t in range(plan.trials)]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            outputs = list(pool.map(_run_trial_args, jobs))
    else:
        outputs = [_run_trial_args(j) for j in jobs]
    result = ExperimentResult(config, plan)
    for o in outputs:
        result.records.extend(o.records)
        result.vr_rows.extend(o.vr_rows)
        result.sca_traces.extend(o.sca_traces)
        result.phase_traces.extend(o.phase_traces)
        result.wall_times.append(o.wall_time)
        if o.failure:
            result.failures.append(o.failure)
    return result


def sweep(config: SystemConfig, plan: ExperimentPlan) -> list:
    """One :class:`ExperimentResult` per sweep value, sharing trial seeds."""
    if plan.sweep_axis is None:
        raise HarnessError("plan has no sweep axis")
    results = []
    for value in plan.sweep_values:
        res = run_pipeline(apply_sweep(config, plan.sweep_axis, value), plan)
        res.sweep_value = value
        res.base_config = config
        results.append(res)
    return results


def run_plan(config: SystemConfig, plan: ExperimentPlan) -> list:
    """List of results: one per sweep value, or a single one without a sweep."""
    return sweep(config, plan) if plan.sweep_axis else [run_pipeline(config, plan)]


# ---------------------------------------------------------------------------
# reports

RECORD_COLUMNS = [f.name for f in dataclasses.fields(TrialRecord)]
CDF_COLUMNS = ["scheme", "precoder", "metric", "value", "cdf"]
SUMMARY_COLUMNS = ["scheme", "precoder", "trials", "failed", "objective_mean", "objective_median",
                   "se_near_min_mean", "se_far_min_mean", "omega_mean", "iterations_mean", "qos_met_fraction"]
VR_COLUMNS = ["trial", "kind", "user", "group", "subarrays", "baseline_sinr", "threshold", "final_sinr", "evaluations"]
SCA_TRACE_COLUMNS = ["trial", "precoder", "iter", "objective", "t_near", "t_far", "power_margin", "max_violation"]
PHASE_TRACE_COLUMNS = ["trial", "precoder", "outer", "inner", "penalty", "t", "objective", "residual", "min_eig"]
FAILURE_COLUMNS = ["trial", "stage", "error"]
SWEEP_COLUMNS = ["axis", "value"] + SUMMARY_COLUMNS


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return v


def _write_csv(path: Path, columns: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


def summary_rows(result: ExperimentResult) -> list:
    rows = []
    for scheme in result.plan.schemes:
        for p in result.plan.precoders:
            recs = result.select(scheme, p)
            def mean(attr):
                return float(np.mean([getattr(r, attr) for r in recs])) if recs else math.nan
            rows.append({
                "scheme": scheme, "precoder": p, "trials": len(recs),
                "failed": result.plan.trials - len(recs),
                "objective_mean": mean("objective"),
                "objective_median": float(np.median([r.objective for r in recs])) if recs else math.nan,
                "se_near_min_mean": mean("se_near_min"),
                "se_far_min_mean": mean("se_far_min"),
                "omega_mean": mean("omega"),
                "iterations_mean": mean("iterations"),
                "qos_met_fraction": mean("qos_met"),
            })
    return rows


def cdf_rows(result: ExperimentResult) -> list:
    rows = []
    for scheme in result.plan.schemes:
        for p in result.plan.precoders:
            for metric in ("objective", "se_near_min", "se_far_min"):
                x, F = result.cdf(scheme, p, metric)
                rows.extend({"scheme": scheme, "precoder": p, "metric": metric, "value": xv, "cdf": fv}
                            for xv, fv in zip(x, F))
    return rows


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_result(result: ExperimentResult, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "records.csv": (RECORD_COLUMNS, [dataclasses.asdict(r) for r in result.records]),
        "cdf.csv": (CDF_COLUMNS, cdf_rows(result)),
        "summary.csv": (SUMMARY_COLUMNS, summary_rows(result)),
        "vr.csv": (VR_COLUMNS, result.vr_rows),
        "sca_trace.csv": (SCA_TRACE_COLUMNS, result.sca_traces),
        "phase_trace.csv": (PHASE_TRACE_COLUMNS, result.phase_traces),
        "failures.csv": (FAILURE_COLUMNS, result.failures),
    }
    digests = {}
    for name, (cols, rows) in files.items():
        _write_csv(out / name, cols, rows)
        digests[name] = _sha256(out / name)
    return digests


def emit_reports(results, out_dir) -> Path:
    """Write CSV reports and ``manifest.json``; returns the manifest path.

    ``results`` is one :class:`ExperimentResult` or the list returned by
    :func:`run_plan`. Sweep points go to ``<axis>=<value>/`` subdirectories
    and a ``sweep.csv`` summary. Wall-times go to ``timings.json``, the only
    file that differs between identical runs.
    """
    if isinstance(results, ExperimentResult):
        results = [results]
    if not results:
        raise HarnessError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan, base_cfg = results[0].plan, results[0].config
    files, timings = {}, {}
    if plan.sweep_axis is None:
        files.update(_write_result(results[0], out))
        timings["trials"] = results[0].wall_times
    else:
        sweep_rows = []
        for res in results:
            sub = f"{plan.sweep_axis}={res.sweep_value}"
            for name, digest in _write_result(res, out / sub).items():
                files[f"{sub}/{name}"] = digest
            timings[sub] = res.wall_times
            sweep_rows.extend({"axis": plan.sweep_axis, "value": res.sweep_value, **row} for row in summary_rows(res))
        _write_csv(out / "sweep.csv", SWEEP_COLUMNS, sweep_rows)
        files["sweep.csv"] = _sha256(out / "sweep.csv")
    manifest = {
        "package_version": __version__,
        "config": base_cfg.to_dict() if plan.sweep_axis is None else _sweep_base(results).to_dict(),
        "config_hash": (base_cfg if plan.sweep_axis is None else _sweep_base(results)).config_hash(),
        "plan": plan.to_dict(),
        "seed": plan.seed,
        "files": files,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n", encoding="utf-8")
    return path


def _sweep_base(results) -> SystemConfig:
    return results[0].base_config or results[0].config


def load_manifest(path) -> tuple:
    """(config, plan) recorded in a manifest, ready for :func:`run_plan`."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        cfg = config_from_dict(data["config"], SystemConfig())
        plan = ExperimentPlan.from_dict(data["plan"])
    except (KeyError, TypeError) as exc:
        raise HarnessError(f"malformed manifest {path}: {exc}") from exc
    return cfg, plan
