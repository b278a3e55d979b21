"""Seeded (policy x environment) experiment runner with invariant monitors.

Pseudo-regret is measured against the best fixed arm in hindsight using the
known environment means: each round contributes <p_t, m_t> - m_t[comparator],
which conditions on the play distribution and so carries no arm-sampling
variance.  Repetition r seeds its policy and environment generators from
base_seed + r; outputs are pure functions of the config.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import ExperimentConfig, build_policy
from .environments import Environment
from .errors import RunFailure
from .types import RoundRecord, SimplexDistribution

FATAL_FLAGS = (
    "gamma_le_half",
    "bonus_le_clip",
    "beta_monotone",
    "simplex_ok",
    "clip_contained",
)
ADVISORY_FLAGS = ("h_ratio_ok",)


@dataclass
class RegretCurve:
    """Aggregated pseudo-regret at the requested checkpoints.

    ``per_seed`` is an (R, n_checkpoints) matrix; failed repetitions hold NaN
    rows and are excluded from the mean and standard error.
    """

    checkpoints: tuple
    mean_regret: np.ndarray
    stderr: np.ndarray
    per_seed: np.ndarray
    invariant_summary: dict
    advisory_summary: dict
    comparator: int
    failures: tuple = ()
    traces: list | None = None

    @property
    def violations_total(self) -> int:
        return int(sum(self.invariant_summary.values()))


def pseudo_regret_increment(p: SimplexDistribution, means_t, comparator: int) -> float:
    """One round of pseudo-regret: <p_t, m_t> - m_t[comparator]."""
    m = np.asarray(means_t, dtype=float)
    w = p.weights if isinstance(p, SimplexDistribution) else np.asarray(p, dtype=float)
    if w.size != m.size:
        raise ValueError(f"distribution has {w.size} arms but means have {m.size}")
    return float(w @ m - m[comparator])


def hindsight_comparator(mean_matrix: np.ndarray) -> int:
    """Best fixed arm: argmin of summed means, ties to the lowest index."""
    return int(np.argmin(mean_matrix.sum(axis=0)))


def _play_repetition(policy, rng, env_r, horizon, checkpoints, monitors_off, record_trace):
    """One repetition against an already started environment clone.

    Oblivious environments expose their mean matrix up front, so regret
    accumulates online; adaptive (callback) adversaries materialize means in
    play order, so regret and the comparator are computed post hoc from the
    realized rows.
    """
    adaptive = getattr(env_r, "is_adaptive", False)
    means = None if adaptive else env_r.mean_matrix(horizon)
    comparator = None if adaptive else hindsight_comparator(means)
    p_rows = np.empty((horizon, env_r.n_arms)) if adaptive else None

    regret = 0.0
    out = np.empty(len(checkpoints))
    fatal = dict.fromkeys(FATAL_FLAGS, 0)
    advisory = dict.fromkeys(ADVISORY_FLAGS, 0)
    trace = [] if record_trace else None
    cp_pos = {cp: i for i, cp in enumerate(checkpoints)}

    for t in range(1, horizon + 1):
        p, arm = policy.select(rng)
        loss = env_r.sample_loss(t, arm)
        rec = policy.observe(loss)
        if adaptive:
            p_rows[t - 1] = p.weights
        else:
            row = means[t - 1]
            regret += float(p.weights @ row) - row[comparator]
        flags = rec.invariant_flags
        for name in FATAL_FLAGS:
            if flags.get(name) is False and name not in monitors_off:
                fatal[name] += 1
        for name in ADVISORY_FLAGS:
            if flags.get(name) is False and name not in monitors_off:
                advisory[name] += 1
        if trace is not None:
            trace.append(rec)
        if not adaptive and t in cp_pos:
            out[cp_pos[t]] = regret

    if adaptive:
        realized = env_r.mean_matrix(horizon)
        comparator = hindsight_comparator(realized)
        increments = np.einsum("tk,tk->t", p_rows, realized) - realized[:, comparator]
        cumulative = np.cumsum(increments)
        for cp, i in cp_pos.items():
            out[i] = cumulative[cp - 1]
    return out, fatal, advisory, comparator, trace


def _run_repetition(config: ExperimentConfig, env, rep: int, record_trace: bool):
    ss = np.random.SeedSequence(config.base_seed + rep)
    pol_seed, env_seed = ss.spawn(2)
    rng = np.random.default_rng(pol_seed)
    env_r = env.clone(env_seed)
    env_r.start(config.horizon)
    policy = build_policy(config)
    monitors_off = {k for k, v in config.monitors.items() if v is False}
    return _play_repetition(
        policy, rng, env_r, config.horizon, config.checkpoints, monitors_off, record_trace
    )


def run_experiment(config: ExperimentConfig, record_trace: bool = False) -> RegretCurve:
    """Run all repetitions and aggregate; raises RunFailure (with the partial
    curve attached) when any repetition aborts."""
    env = Environment(config.env_spec)  # certifies the moment contract once
    reps = config.repetitions
    results: list = [None] * reps
    errors: list = [None] * reps

    def work(r: int):
        try:
            results[r] = _run_repetition(config, env, r, record_trace)
        except Exception as exc:  # noqa: BLE001 - reported, then fails the run
            errors[r] = f"repetition {r}: {type(exc).__name__}: {exc}"

    n_workers = _worker_count()
    if n_workers > 1 and reps > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(work, range(reps)))
    else:
        for r in range(reps):
            work(r)

    per_seed = np.full((reps, len(config.checkpoints)), np.nan)
    fatal = dict.fromkeys(FATAL_FLAGS, 0)
    advisory = dict.fromkeys(ADVISORY_FLAGS, 0)
    comparator = -1
    traces = []
    for r in range(reps):
        if results[r] is None:
            continue
        out, f, a, comparator, trace = results[r]
        per_seed[r] = out
        for k, v in f.items():
            fatal[k] += v
        for k, v in a.items():
            advisory[k] += v
        if trace is not None:
            traces.append(trace)

    ok = ~np.isnan(per_seed[:, 0])
    n_ok = int(ok.sum())
    if n_ok > 0:
        mean = per_seed[ok].mean(axis=0)
        std = per_seed[ok].std(axis=0, ddof=1) if n_ok > 1 else np.zeros(len(config.checkpoints))
        stderr = std / math.sqrt(n_ok)
    else:
        mean = np.full(len(config.checkpoints), np.nan)
        stderr = np.full(len(config.checkpoints), np.nan)

    curve = RegretCurve(
        checkpoints=config.checkpoints,
        mean_regret=mean,
        stderr=stderr,
        per_seed=per_seed,
        invariant_summary=fatal,
        advisory_summary=advisory,
        comparator=comparator,
        failures=tuple(e for e in errors if e is not None),
    )
    if record_trace:
        curve = replace(curve, traces=traces)
    if curve.failures:
        err = RunFailure(
            f"{len(curve.failures)} of {reps} repetitions failed: "
            + "; ".join(curve.failures)
        )
        err.curve = curve
        raise err
    return curve


def run_custom(
    policy_factory,
    environment,
    repetitions: int,
    base_seed: int,
    checkpoints,
    monitors: dict | None = None,
) -> RegretCurve:
    """Run a custom policy/environment pair outside the config system.

    ``policy_factory()`` builds a fresh policy per repetition;
    ``environment`` is cloned per repetition (this is the entry point for
    non-oblivious callback adversaries, whose regret is measured against the
    realized mean sequence).  Seeding and aggregation mirror run_experiment.
    """
    checkpoints = tuple(checkpoints)
    horizon = checkpoints[-1]
    monitors_off = {k for k, v in (monitors or {}).items() if v is False}
    per_seed = np.full((repetitions, len(checkpoints)), np.nan)
    fatal = dict.fromkeys(FATAL_FLAGS, 0)
    advisory = dict.fromkeys(ADVISORY_FLAGS, 0)
    comparator = -1
    failures = []
    for rep in range(repetitions):
        ss = np.random.SeedSequence(base_seed + rep)
        pol_seed, env_seed = ss.spawn(2)
        rng = np.random.default_rng(pol_seed)
        env_r = environment.clone(env_seed)
        env_r.start(horizon)
        try:
            out, f, a, comparator, _ = _play_repetition(
                policy_factory(), rng, env_r, horizon, checkpoints, monitors_off, False
            )
        except Exception as exc:  # noqa: BLE001 - reported, then fails the run
            failures.append(f"repetition {rep}: {type(exc).__name__}: {exc}")
            continue
        per_seed[rep] = out
        for k, v in f.items():
            fatal[k] += v
        for k, v in a.items():
            advisory[k] += v
    ok = ~np.isnan(per_seed[:, 0])
    n_ok = int(ok.sum())
    mean = per_seed[ok].mean(axis=0) if n_ok else np.full(len(checkpoints), np.nan)
    std = (
        per_seed[ok].std(axis=0, ddof=1)
        if n_ok > 1
        else np.zeros(len(checkpoints))
    )
    curve = RegretCurve(
        checkpoints=checkpoints,
        mean_regret=mean,
        stderr=std / math.sqrt(max(n_ok, 1)),
        per_seed=per_seed,
        invariant_summary=fatal,
        advisory_summary=advisory,
        comparator=comparator,
        failures=tuple(failures),
    )
    if failures:
        err = RunFailure(f"{len(failures)} of {repetitions} repetitions failed")
        err.curve = curve
        raise err
    return curve


def _worker_count() -> int:
    raw = os.environ.get("HTB_THREADS", "")
    if not raw:
        return 1
    n = int(raw)
    return os.cpu_count() or 1 if n == 0 else max(1, n)


def trace_run(config: ExperimentConfig, repetition: int = 0) -> list[RoundRecord]:
    """Per-round records of one repetition, for golden-file replay."""
    env = Environment(config.env_spec)
    out, _, _, _, trace = _run_repetition(config, env, repetition, record_trace=True)
    return trace


def scaling_probe(config: ExperimentConfig, horizons) -> list[dict]:
    """Rerun the experiment per horizon and report normalized regret ratios.

    Each row carries mean regret at T together with regret / T^(1/eps) and
    regret / ln T, the signatures the acceptance checks discriminate on.
    """
    horizons = list(horizons)
    if len(horizons) < 3 or sorted(horizons) != horizons:
        raise ValueError("need at least 3 increasing horizons")
    eps = config.env_spec.tail.epsilon
    rows = []
    for t_max in horizons:
        env_spec = _respec_horizon(config.env_spec, t_max)
        cfg = replace(
            config,
            env_spec=env_spec,
            horizon=t_max,
            checkpoints=(t_max,),
        )
        curve = run_experiment(cfg)
        reg = float(curve.mean_regret[-1])
        rows.append(
            {
                "T": t_max,
                "mean_regret": reg,
                "stderr": float(curve.stderr[-1]),
                "ratio_t_pow": reg / t_max ** (1.0 / eps),
                "ratio_log_t": reg / math.log(t_max),
                "violations_total": curve.violations_total,
            }
        )
    return rows


def _respec_horizon(env_spec, horizon: int):
    base = _respec_horizon(env_spec.base, horizon) if env_spec.base is not None else None
    return replace(env_spec, horizon=horizon, base=base)


def format_float(x: float) -> str:
    """Shortest round-trip decimal; keeps rerun outputs byte-identical."""
    return repr(float(x))


def regret_csv_lines(curve: RegretCurve, config: ExperimentConfig) -> list[str]:
    header = (
        "run_id,policy,regime,epsilon,sigma,T_checkpoint,mean_regret,stderr,violations_total"
    )
    lines = [header]
    for i, cp in enumerate(curve.checkpoints):
        lines.append(
            ",".join(
                [
                    config.run_id(),
                    config.policy_id,
                    config.env_spec.regime,
                    format_float(config.env_spec.tail.epsilon),
                    format_float(config.env_spec.tail.sigma),
                    str(cp),
                    format_float(curve.mean_regret[i]),
                    format_float(curve.stderr[i]),
                    str(curve.violations_total),
                ]
            )
        )
    return lines


def summary_dict(curve: RegretCurve, config: ExperimentConfig) -> dict:
    return {
        "run_id": config.run_id(),
        "policy": config.policy_id,
        "regime": config.env_spec.regime,
        "epsilon": config.env_spec.tail.epsilon,
        "sigma": config.env_spec.tail.sigma,
        "horizon": config.horizon,
        "repetitions": config.repetitions,
        "base_seed": config.base_seed,
        "comparator": curve.comparator,
        "checkpoints": list(curve.checkpoints),
        "mean_regret": [None if np.isnan(x) else x for x in curve.mean_regret.tolist()],
        "stderr": [None if np.isnan(x) else x for x in curve.stderr.tolist()],
        "per_seed": [
            [None if np.isnan(x) else x for x in row] for row in curve.per_seed.tolist()
        ],
        "invariant_violations": dict(curve.invariant_summary),
        "advisory_violations": dict(curve.advisory_summary),
        "violations_total": curve.violations_total,
        "failures": list(curve.failures),
        "config": config.echo,
    }
