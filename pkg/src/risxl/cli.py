"""Command-line entry point: ``risxl {simulate,sweep,validate,dump-config}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, dumps_config, load_config, profile
from .harness import (
    PRECODERS, SCHEMES, SWEEP_AXES, ExperimentPlan, HarnessError, emit_reports, load_manifest, run_plan,
    summary_rows,
)


def _choices(value: str, allowed) -> tuple:
    items = tuple(v.strip() for v in value.split(",") if v.strip())
    if value.strip().lower() == "all":
        return tuple(allowed)
    bad = [v for v in items if v not in allowed]
    if bad or not items:
        raise HarnessError(f"unknown value in {value!r}; choose from {', '.join(allowed)} or 'all'")
    return items


def _parse_sweep(text: str) -> tuple:
    """``axis=v1,v2,...`` -> (axis, values)."""
    axis, sep, rest = text.partition("=")
    if not sep or axis not in SWEEP_AXES:
        raise argparse.ArgumentTypeError(f"expected AXIS=V1,V2,... with AXIS in {SWEEP_AXES}")
    try:
        values = tuple(int(v) if axis == "M" else float(v) for v in rest.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad sweep value: {exc}") from exc
    return axis, values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risxl", description="RIS-assisted XL-MIMO downlink experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, experiment=True):
        p.add_argument("--profile", choices=("desk", "paper"), default="desk", help="base parameter set")
        p.add_argument("--config", type=Path, help="TOML file overriding the profile")
        if experiment:
            p.add_argument("--scheme", default="all", help="comma-separated subset of " + ",".join(SCHEMES))
            p.add_argument("--precoder", default="all", help="comma-separated subset of " + ",".join(PRECODERS))
            p.add_argument("--trials", type=int, default=10)
            p.add_argument("--seed", type=int, help="master seed (defaults to the config seed)")
            p.add_argument("--workers", type=int, default=1, help="parallel trial workers")
            p.add_argument("--out-dir", type=Path, default=Path("results"))
            p.add_argument("--manifest", type=Path, help="re-run the experiment recorded in a manifest")
            p.add_argument("--strict", action="store_true", help="exit nonzero if any trial failed")

    sim = sub.add_parser("simulate", help="run the pipeline for a number of trials")
    common(sim)
    sw = sub.add_parser("sweep", help="run the pipeline over a parameter sweep")
    common(sw)
    sw.add_argument("--sweep", required=True, type=_parse_sweep, help="AXIS=V1,V2,... with AXIS in M, delta, weights, P")
    val = sub.add_parser("validate", help="closed-form vs Monte-Carlo oracle check on the current config")
    common(val, experiment=False)
    val.add_argument("--draws", type=int, default=20000)
    val.add_argument("--precoder", default="all", help="comma-separated subset of " + ",".join(PRECODERS))
    val.add_argument("--seed", type=int, default=0)
    dump = sub.add_parser("dump-config", help="print the effective configuration as TOML")
    common(dump, experiment=False)
    return parser


def _config(args):
    cfg = profile(args.profile)
    if args.config is not None:
        cfg = load_config(args.config, base=cfg)
    return cfg


def _experiment(args) -> int:
    if args.manifest is not None:
        cfg, plan = load_manifest(args.manifest)
    else:
        cfg = _config(args)
        axis, values = getattr(args, "sweep", None) or (None, ())
        plan = ExperimentPlan(
            schemes=_choices(args.scheme, SCHEMES),
            precoders=_choices(args.precoder, PRECODERS),
            trials=args.trials,
            seed=cfg.seed if args.seed is None else args.seed,
            sweep_axis=axis,
            sweep_values=values,
            workers=args.workers,
        )
    results = run_plan(cfg, plan)
    manifest = emit_reports(results, args.out_dir)
    failed = 0
    for res in results:
        prefix = "" if res.sweep_value is None else f"[{plan.sweep_axis}={res.sweep_value}] "
        for row in summary_rows(res):
            print(f"{prefix}{row['scheme']:8s} {row['precoder']:4s} n={row['trials']:3d} "
                  f"objective mean={row['objective_mean']:.4f} median={row['objective_median']:.4f} "
                  f"omega={row['omega_mean']:.3f}")
        for f in res.failures:
            print(f"{prefix}trial {f['trial']} failed at {f['stage']}: {f['error']}", file=sys.stderr)
        failed += len(res.failures)
    print(f"reports written; manifest {manifest}")
    return 1 if (args.strict and failed) else 0


def _validate(args) -> int:
    """Model-vs-oracle agreement of every SINR term for each precoder.

    MRT compares the closed form with independent oracle draws. CZF and LZF
    build their statistical model from the same draws as the oracle, so the
    comparison isolates the algebra from sampling noise.
    """
    from .analytics import MrtStatistics, estimate_expectations, model_terms, oracle_sinr, term_agreement, zf_model
    from .channels import build_channels, draw_geometry
    from .precoding import VrAssignment

    cfg = _config(args)
    rng = np.random.default_rng(args.seed)
    channels = build_channels(cfg, draw_geometry(cfg, rng), rng=rng)
    vr = VrAssignment.full(cfg.K_n, cfg.K_f, cfg.S)
    ok = True
    for kind in _choices(args.precoder, PRECODERS):
        seed = args.seed + 1
        if kind == "MRT":
            model = MrtStatistics.compute(channels).model(vr)
        else:
            cache = estimate_expectations(channels, kind, vr if kind == "LZF" else None, args.draws, seed=seed)
            model = zf_model(channels, cache, vr)
        alloc = model.allocation(model.equal_amplitudes(cfg.P))
        oracle = oracle_sinr(channels, kind, vr, alloc, args.draws, seed=seed)
        for name, ratio in term_agreement(model_terms(model, alloc), oracle).items():
            ok &= ratio <= 1.0
            print(f"{kind} {name:3s} worst |model - oracle| / tolerance = {ratio:.3f} {'ok' if ratio <= 1.0 else 'FAIL'}")
    print("validation", "passed" if ok else "failed")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "dump-config":
            sys.stdout.write(dumps_config(_config(args)))
            return 0
        if args.command == "validate":
            return _validate(args)
        return _experiment(args)
    except (ConfigError, HarnessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
