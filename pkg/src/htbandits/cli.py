"""Command-line driver: run experiments, sweep horizons, validate inputs.

Exit codes are a stable contract: 0 success, 1 runtime or invariant failure,
2 configuration error.  All output files are byte-identical across reruns
with the same config and seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, parse_config
from .design import centered_optimal_design, g_optimal_design
from .environments import Environment
from .errors import ConfigError, HtBanditsError, MomentViolation, RunFailure
from .harness import (
    format_float,
    regret_csv_lines,
    run_experiment,
    scaling_probe,
    summary_dict,
    trace_run,
)
from .types import FeatureSet, RoundRecord


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MomentViolation as exc:
        # An uncertifiable environment is a configuration problem, except in
        # validate-moments where it is the diagnostic being reported.
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HtBanditsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htbandits",
        description="Heavy-tailed bandit experiments: run, sweep, validate, trace.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, needs_out=False):
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", required=needs_out, help="output path prefix")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p_run = sub.add_parser("run", help="run one experiment; write CSV + JSON")
    common(p_run, needs_out=True)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="rerun over horizons; combined CSV")
    common(p_sweep, needs_out=True)
    p_sweep.add_argument(
        "--horizons", required=True, help="comma-separated increasing horizons"
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_design = sub.add_parser(
        "check-design", help="compute designs for a feature CSV; print JSON"
    )
    p_design.add_argument("--config", required=True, help="path to the feature CSV")
    p_design.add_argument("--header", action="store_true", help="CSV has a header row")
    p_design.add_argument("--tol", type=float, default=1e-3, help="design tolerance")
    p_design.add_argument("--out", default=None, help="optional JSON output path")
    p_design.add_argument("--quiet", action="store_true")
    p_design.set_defaults(func=cmd_check_design)

    p_val = sub.add_parser(
        "validate-moments", help="check the per-arm moment certificates"
    )
    common(p_val)
    p_val.add_argument(
        "--mc-draws", type=int, default=10**6, help="Monte Carlo draws per arm"
    )
    p_val.set_defaults(func=cmd_validate)

    p_trace = sub.add_parser(
        "trace", help="dump one repetition's per-round records as JSON lines"
    )
    common(p_trace)
    p_trace.add_argument(
        "--repetition", type=int, default=0, help="which repetition to trace"
    )
    p_trace.set_defaults(func=cmd_trace)
    return parser


def _load(args) -> ExperimentConfig:
    path = Path(args.config)
    config = _maybe_from_prior_output(path) or load_config(path)
    if args.seed is not None:
        config = dataclasses.replace(config, base_seed=args.seed)
    return config


def _maybe_from_prior_output(path: Path) -> ExperimentConfig | None:
    """A prior summary JSON echoes its config; allow replaying from it."""
    if path.suffix != ".json":
        return None
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    if isinstance(raw, dict) and "config" in raw and "run_id" in raw:
        return parse_config(raw["config"], base_dir=path.parent)
    return None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_run(args) -> int:
    config = _load(args)
    try:
        curve = run_experiment(config)
        failed = False
    except RunFailure as exc:
        curve = exc.curve
        failed = True
    out = Path(args.out)
    _write(out.with_suffix(".csv"), "\n".join(regret_csv_lines(curve, config)) + "\n")
    _write(
        out.with_suffix(".json"),
        json.dumps(summary_dict(curve, config), sort_keys=True, indent=2) + "\n",
    )
    bad = curve.violations_total > 0 or failed
    if not args.quiet:
        status = "FAIL" if bad else "ok"
        print(
            f"{status} {config.run_id()}: regret@{curve.checkpoints[-1]} = "
            f"{curve.mean_regret[-1]:.4f} (+/- {curve.stderr[-1]:.4f}), "
            f"{curve.violations_total} invariant violations, "
            f"{len(curve.failures)} failed repetitions"
        )
    return 1 if bad else 0


def cmd_sweep(args) -> int:
    config = _load(args)
    try:
        horizons = [int(x) for x in args.horizons.split(",") if x]
    except ValueError as exc:
        raise ConfigError(f"bad --horizons list: {exc}") from exc
    rows = scaling_probe(config, horizons)
    header = (
        "run_id,policy,regime,epsilon,sigma,T,mean_regret,stderr,"
        "ratio_t_pow,ratio_log_t,violations_total"
    )
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(
                [
                    config.run_id(),
                    config.policy_id,
                    config.env_spec.regime,
                    format_float(config.env_spec.tail.epsilon),
                    format_float(config.env_spec.tail.sigma),
                    str(row["T"]),
                    format_float(row["mean_regret"]),
                    format_float(row["stderr"]),
                    format_float(row["ratio_t_pow"]),
                    format_float(row["ratio_log_t"]),
                    str(row["violations_total"]),
                ]
            )
        )
    out = Path(args.out)
    _write(out.with_suffix(".csv"), "\n".join(lines) + "\n")
    _write(
        out.with_suffix(".json"),
        json.dumps({"run_id": config.run_id(), "rows": rows, "config": config.echo},
                   sort_keys=True, indent=2) + "\n",
    )
    total = sum(r["violations_total"] for r in rows)
    if not args.quiet:
        print(f"{'FAIL' if total else 'ok'} sweep over {len(rows)} horizons, "
              f"{total} invariant violations")
    return 1 if total else 0


def cmd_check_design(args) -> int:
    try:
        features = FeatureSet.from_csv(args.config, header=args.header)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc), field=str(args.config)) from exc
    d = features.ambient_dim
    report: dict = {"n_arms": features.n_arms, "ambient_dim": d, "tol": args.tol}
    raw = g_optimal_design(features, args.tol)
    report["g_optimal"] = {
        "weights": raw.distribution.weights.tolist(),
        "max_leverage": raw.max_leverage,
        "certified": bool(raw.max_leverage <= d * (1.0 + args.tol)),
        "iterations": raw.iterations,
    }
    try:
        cen = centered_optimal_design(features, args.tol)
        report["centered"] = {
            "weights": cen.distribution.weights.tolist(),
            "max_leverage": cen.max_leverage,
            "certified": bool(cen.max_leverage <= d * (1.0 + args.tol)),
            "iterations": cen.iterations,
        }
    except HtBanditsError as exc:
        report["centered"] = {"error": f"{type(exc).__name__}: {exc}"}
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        _write(Path(args.out), text + "\n")
    if not args.quiet:
        print(text)
    ok = report["g_optimal"]["certified"] and report["centered"].get("certified", False)
    return 0 if ok else 1


def cmd_validate(args) -> int:
    config = _load(args)
    env = Environment(config.env_spec, check_certificates=False)
    sigma = config.env_spec.tail.sigma
    rows = []
    for arm in range(env.n_arms):
        cert = float(env.certificates[arm])
        est, se, bound = env.monte_carlo_moment_check(
            arm, n_draws=args.mc_draws, seed=config.base_seed
        )
        rows.append(
            {
                "arm": arm,
                "certificate": cert,
                "sigma": sigma,
                "certified": bool(cert <= sigma * (1 + 1e-9)),
                "mc_order": config.env_spec.tail.epsilon - 0.1,
                "mc_estimate": est,
                "mc_stderr": se,
                "mc_bound": bound,
                "mc_ok": bool(est <= bound + 3.0 * se),
            }
        )
    text = json.dumps({"arms": rows}, sort_keys=True, indent=2)
    if args.out:
        _write(Path(args.out), text + "\n")
    if not args.quiet:
        print(text)
    all_ok = all(r["certified"] and r["mc_ok"] for r in rows)
    return 0 if all_ok else 1


def _record_to_dict(rec: RoundRecord) -> dict:
    out = {
        "t": rec.t,
        "q": rec.q.weights.tolist(),
        "p": rec.p.weights.tolist(),
        "chosen_arm": rec.chosen_arm,
        "observed_loss": rec.observed_loss,
        "clipped_estimate": np.asarray(rec.clipped_estimate).tolist(),
        "bonus": np.asarray(rec.bonus).tolist(),
        "gamma": rec.gamma,
        "clip_thresholds": np.asarray(rec.clip_thresholds).tolist(),
        "beta": rec.beta,
        "invariant_flags": dict(rec.invariant_flags),
    }
    if rec.z is not None:
        out["z"] = rec.z
        out["w"] = rec.w
    if rec.entropy is not None:
        out["entropy"] = rec.entropy
    return out


def cmd_trace(args) -> int:
    config = _load(args)
    try:
        records = trace_run(config, repetition=args.repetition)
    except MomentViolation as exc:
        raise ConfigError(str(exc), field="environment") from exc
    lines = [json.dumps(_record_to_dict(r), sort_keys=True) for r in records]
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(Path(args.out), text)
    elif not args.quiet:
        sys.stdout.write(text)
    bad = sum(
        1 for r in records for k, v in r.invariant_flags.items()
        if v is False and k in ("gamma_le_half", "bonus_le_clip", "beta_monotone",
                                "simplex_ok", "clip_contained")
    )
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
