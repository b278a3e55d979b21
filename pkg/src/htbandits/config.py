"""JSON experiment configuration: parsing, validation, and object building.

The schema is a versioned key-value tree; see README for a worked example.
Environment CSV side files (features, scripts, corruption schedules) are
resolved relative to the config file's directory.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environments import (
    Environment,
    EnvironmentSpec,
    NoiseModel,
    calibrate_moment,
)
from .errors import ConfigError
from .policies import AdversarialLinearPolicy, BobwLinearPolicy, BobwMabPolicy
from .types import FeatureSet, HeavyTailSpec

SCHEMA_VERSION = 1
POLICY_IDS = ("bobw_mab", "adv_linear", "bobw_linear")


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment: policy x environment x run plan."""

    policy_id: str
    policy_params: dict
    env_spec: EnvironmentSpec
    horizon: int
    repetitions: int
    base_seed: int
    checkpoints: tuple
    monitors: dict
    echo: dict

    def run_id(self) -> str:
        return (
            f"{self.policy_id}-{self.env_spec.regime}-T{self.horizon}"
            f"-R{self.repetitions}-s{self.base_seed}"
        )


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError("missing required field", field=f"{path}.{key}")
    return obj[key]


def _as_int(val, path: str, minimum: int | None = None) -> int:
    if not isinstance(val, int) or isinstance(val, bool):
        raise ConfigError(f"expected an integer, got {val!r}", field=path)
    if minimum is not None and val < minimum:
        raise ConfigError(f"must be >= {minimum}, got {val}", field=path)
    return val


def _as_real(val, path: str) -> float:
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val):
        raise ConfigError(f"expected a finite real, got {val!r}", field=path)
    return float(val)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError with diagnostics."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), field=str(path)) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
            field=str(path),
        ) from exc
    return parse_config(raw, base_dir=path.parent)


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    base_dir = Path(".") if base_dir is None else base_dir
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version}, expected {SCHEMA_VERSION}",
            field="schema_version",
        )
    horizon = _as_int(_require(raw, "horizon", "config"), "horizon", minimum=1)
    reps = _as_int(raw.get("repetitions", 1), "repetitions", minimum=1)
    base_seed = _as_int(raw.get("base_seed", 0), "base_seed")

    checkpoints = raw.get("checkpoints", [horizon])
    if not isinstance(checkpoints, list) or not checkpoints:
        raise ConfigError("checkpoints must be a nonempty list", field="checkpoints")
    cps = tuple(_as_int(c, "checkpoints[]", minimum=1) for c in checkpoints)
    if any(b <= a for a, b in zip(cps, cps[1:])) or cps[-1] > horizon:
        raise ConfigError(
            "checkpoints must be strictly increasing and bounded by the horizon",
            field="checkpoints",
        )

    monitors = raw.get("monitors", {})
    if not isinstance(monitors, dict):
        raise ConfigError("monitors must be an object of booleans", field="monitors")

    env_spec = parse_environment(
        _require(raw, "environment", "config"), horizon, base_dir
    )

    pol = _require(raw, "policy", "config")
    if not isinstance(pol, dict):
        raise ConfigError("policy must be an object", field="policy")
    policy_id = _require(pol, "id", "policy")
    if policy_id not in POLICY_IDS:
        raise ConfigError(
            f"unknown policy id {policy_id!r}; expected one of {POLICY_IDS}",
            field="policy.id",
        )
    params = pol.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("policy.params must be an object", field="policy.params")
    if policy_id in ("adv_linear", "bobw_linear") and env_spec.feature_set() is None:
        raise ConfigError(
            f"policy {policy_id!r} needs an environment with arm features",
            field="environment",
        )
    return ExperimentConfig(
        policy_id=policy_id,
        policy_params=dict(params),
        env_spec=env_spec,
        horizon=horizon,
        repetitions=reps,
        base_seed=base_seed,
        checkpoints=cps,
        monitors=dict(monitors),
        echo=raw,
    )


def _load_matrix_csv(path: Path, header: bool) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if i == 0 and header:
                continue
            if row:
                rows.append([float(x) for x in row])
    if not rows:
        raise ConfigError("empty CSV", field=str(path))
    return np.asarray(rows)


def _load_schedule_csv(path: Path) -> tuple:
    out = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                t, arm, shift = int(row[0]), int(row[1]), float(row[2])
            except ValueError:
                if i == 0:
                    continue  # header row
                raise ConfigError(f"bad schedule row {row!r}", field=str(path))
            out.append((t, arm, shift))
    return tuple(out)


def parse_environment(obj: dict, horizon: int, base_dir: Path) -> EnvironmentSpec:
    if not isinstance(obj, dict):
        raise ConfigError("environment must be an object", field="environment")
    eps = _as_real(_require(obj, "epsilon", "environment"), "environment.epsilon")
    sigma = _as_real(_require(obj, "sigma", "environment"), "environment.sigma")
    try:
        tail = HeavyTailSpec(eps, sigma)
    except ValueError as exc:
        raise ConfigError(str(exc), field="environment.epsilon") from exc

    noise_obj = _require(obj, "noise", "environment")
    if not isinstance(noise_obj, dict):
        raise ConfigError("noise must be an object", field="environment.noise")
    kind = _require(noise_obj, "kind", "environment.noise")
    shape = _as_real(_require(noise_obj, "shape", "environment.noise"), "environment.noise.shape")
    scale_raw = noise_obj.get("scale", 1.0)
    auto_scale = scale_raw == "auto"
    try:
        noise = NoiseModel(kind, shape, 1.0 if auto_scale else _as_real(scale_raw, "environment.noise.scale"))
    except ValueError as exc:
        raise ConfigError(str(exc), field="environment.noise") from exc

    def build_regime(spec_obj: dict, path: str, nested: bool) -> EnvironmentSpec:
        regime = _require(spec_obj, "regime", path)
        features = None
        if "features" in spec_obj:
            features = FeatureSet(np.asarray(spec_obj["features"], dtype=float))
        elif "features_csv" in spec_obj:
            features = FeatureSet.from_csv(
                base_dir / spec_obj["features_csv"],
                header=bool(spec_obj.get("features_csv_header", False)),
            )
        kwargs = dict(noise=noise, tail=tail, horizon=horizon, features=features)
        try:
            if regime == "stochastic_mab":
                means = np.asarray(_require(spec_obj, "means", path), dtype=float)
                return EnvironmentSpec("stochastic_mab", means=means, **kwargs)
            if regime == "stochastic_linear":
                theta = np.asarray(_require(spec_obj, "theta", path), dtype=float)
                return EnvironmentSpec("stochastic_linear", theta=theta, **kwargs)
            if regime == "adversarial_script":
                if "script" in spec_obj:
                    script = np.asarray(spec_obj["script"], dtype=float)
                elif "script_csv" in spec_obj:
                    script = _load_matrix_csv(
                        base_dir / spec_obj["script_csv"],
                        header=bool(spec_obj.get("script_csv_header", False)),
                    )
                else:
                    raise ConfigError("missing script or script_csv", field=path)
                return EnvironmentSpec("adversarial_script", script=script, **kwargs)
            if regime == "corrupted":
                if nested:
                    raise ConfigError("corrupted regimes do not nest", field=path)
                base = build_regime(_require(spec_obj, "base", path), f"{path}.base", True)
                corr = _require(spec_obj, "corruption", path)
                budget = _as_real(
                    _require(corr, "budget", f"{path}.corruption"),
                    f"{path}.corruption.budget",
                )
                if "schedule" in corr:
                    schedule = tuple(
                        (int(t), int(a), float(s)) for t, a, s in corr["schedule"]
                    )
                elif "schedule_csv" in corr:
                    schedule = _load_schedule_csv(base_dir / corr["schedule_csv"])
                else:
                    raise ConfigError(
                        "missing schedule or schedule_csv", field=f"{path}.corruption"
                    )
                return EnvironmentSpec(
                    "corrupted",
                    base=base,
                    corruption_schedule=schedule,
                    corruption_budget=budget,
                    **kwargs,
                )
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), field=path) from exc
        raise ConfigError(f"unknown regime {regime!r}", field=f"{path}.regime")

    spec = build_regime(obj, "environment", nested=False)
    if auto_scale:
        spec = _resolve_auto_scale(spec)
    return spec


def _resolve_auto_scale(spec: EnvironmentSpec) -> EnvironmentSpec:
    """Replace scale="auto" with the largest certified scale over all means."""
    probe = Environment(spec, seed=0, check_certificates=False)
    worst = np.abs(probe.mean_matrix()).max(axis=0)
    scale = min(calibrate_moment(m, spec.noise.replace_scale(1.0), spec.tail) for m in worst)
    noise = spec.noise.replace_scale(scale)

    def rebuild(s: EnvironmentSpec) -> EnvironmentSpec:
        base = rebuild(s.base) if s.base is not None else None
        return EnvironmentSpec(
            s.regime,
            noise,
            s.tail,
            s.horizon,
            means=s.means,
            theta=s.theta,
            features=s.features,
            script=s.script,
            base=base,
            corruption_schedule=s.corruption_schedule,
            corruption_budget=s.corruption_budget,
        )

    return rebuild(spec)


def build_policy(config: ExperimentConfig):
    """Instantiate the configured policy against the configured environment."""
    params = config.policy_params
    tail = config.env_spec.tail
    if config.policy_id == "bobw_mab":
        return BobwMabPolicy(config.env_spec.n_arms, tail)
    features = config.env_spec.feature_set()
    if config.policy_id == "adv_linear":
        kwargs = {}
        if "design_tol" in params:
            kwargs["design_tol"] = float(params["design_tol"])
        return AdversarialLinearPolicy(features, tail, config.horizon, **kwargs)
    kwargs = {}
    for key in ("alpha", "beta1", "beta_bar", "design_tol"):
        if key in params:
            kwargs[key] = float(params[key])
    return BobwLinearPolicy(features, tail, **kwargs)
