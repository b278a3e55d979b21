"""Loss-generating environments with certified heavy-tail moments.

Regimes: stochastic bandit means, stochastic linear means <phi_a, theta>,
scripted per-round mean sequences, and corrupted variants that add budgeted
mean shifts on top of a base regime.  Every environment certifies
E|loss|^eps <= sigma per arm at construction via the sufficient bound
2^(eps-1) (|mean|^eps + scale^eps E|X|^eps), with closed-form noise moments
for symmetric Pareto and quadrature otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, stats

from .errors import (
    ConfigError,
    Infeasible,
    InvariantViolation,
    MomentViolation,
    NonUniqueOptimum,
)
from .types import FeatureSet, GapProfile, HeavyTailSpec

_CERT_SLACK = 1e-9

REGIMES = ("stochastic_mab", "stochastic_linear", "adversarial_script", "corrupted")
NOISE_KINDS = ("pareto", "student_t", "bounded")


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean noise whose tail index strictly exceeds the loss exponent.

    kind "pareto": symmetric Pareto with tail index ``shape`` (magnitude has
    density a x^-(a+1) on [1, inf), random sign).  kind "student_t": Student t
    with ``shape`` degrees of freedom.  kind "bounded": uniform on
    [-shape, shape].  ``scale`` multiplies every draw.
    """

    kind: str
    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind in ("pareto", "student_t") and self.shape <= 1.0:
            raise ValueError(f"{self.kind} tail parameter must exceed 1, got {self.shape}")
        if self.kind == "bounded" and self.shape < 0.0:
            raise ValueError("half-width must be nonnegative")
        if not (self.scale >= 0.0 and math.isfinite(self.scale)):
            raise ValueError(f"noise scale must be finite and nonnegative, got {self.scale}")

    @property
    def tail_index(self) -> float:
        return self.shape if self.kind in ("pareto", "student_t") else math.inf

    def moment(self, order: float) -> float:
        """E|X|^order of the unscaled variate; closed form for Pareto,
        quadrature otherwise."""
        if not (0.0 < order < self.tail_index):
            raise ValueError(
                f"order {order} moment diverges for tail index {self.tail_index}"
            )
        return _unscaled_moment(self.kind, self.shape, order)

    def sample(self, rng, size: int) -> np.ndarray:
        if self.kind == "pareto":
            mag = 1.0 + rng.pareto(self.shape, size)
            sign = rng.integers(0, 2, size) * 2.0 - 1.0
            base = sign * mag
        elif self.kind == "student_t":
            base = rng.standard_t(self.shape, size)
        else:
            base = rng.uniform(-self.shape, self.shape, size)
        return self.scale * base

    def replace_scale(self, scale: float) -> "NoiseModel":
        return NoiseModel(self.kind, self.shape, scale)


@lru_cache(maxsize=256)
def _unscaled_moment(kind: str, shape: float, order: float) -> float:
    if kind == "pareto":
        return shape / (shape - order)
    if kind == "student_t":
        val, _ = integrate.quad(
            lambda x: 2.0 * x**order * stats.t.pdf(x, shape), 0.0, np.inf, limit=200
        )
        return float(val)
    if shape == 0.0:
        return 0.0
    val, _ = integrate.quad(
        lambda x: x**order / shape, 0.0, shape, limit=200
    )
    return float(val)


def moment_certificate(mean: float, noise: NoiseModel, spec: HeavyTailSpec) -> float:
    """Analytic upper bound on E|mean + noise|^eps used for certification."""
    eps = spec.epsilon
    return 2.0 ** (eps - 1.0) * (
        abs(mean) ** eps + noise.scale**eps * noise.moment(eps)
    )


def calibrate_moment(mean: float, noise: NoiseModel, spec: HeavyTailSpec) -> float:
    """Largest noise scale keeping the certified eps-th moment below sigma.

    Solves 2^(eps-1) (|mean|^eps + c^eps E|X|^eps) <= sigma for c.  Raises
    Infeasible when the mean alone already busts the budget; returns infinity
    for degenerate (zero) noise.
    """
    eps, sigma = spec.epsilon, spec.sigma
    if noise.tail_index <= eps:
        raise ValueError(
            f"noise tail index {noise.tail_index} must strictly exceed epsilon={eps}"
        )
    headroom = sigma * 2.0 ** (1.0 - eps) - abs(mean) ** eps
    if headroom <= 0.0:
        raise Infeasible(
            f"|mean|^eps = {abs(mean)**eps:.6g} >= sigma/2^(eps-1) = "
            f"{sigma * 2.0 ** (1.0 - eps):.6g}; no noise scale can certify"
        )
    base = noise.moment(eps)
    if base == 0.0:
        return math.inf
    return (headroom / base) ** (1.0 / eps)


@dataclass(frozen=True)
class EnvironmentSpec:
    """Declarative description of a loss-generating regime.

    Exactly one of (means, theta+features, script) applies depending on the
    regime; corrupted regimes wrap a base spec plus a schedule of
    (round, arm, mean shift) rows whose per-round max magnitudes sum to at
    most the budget.
    """

    regime: str
    noise: NoiseModel
    tail: HeavyTailSpec
    horizon: int
    means: np.ndarray | None = None
    theta: np.ndarray | None = None
    features: FeatureSet | None = None
    script: np.ndarray | None = None
    base: "EnvironmentSpec | None" = None
    corruption_schedule: tuple = ()
    corruption_budget: float = 0.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}", field="regime")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive", field="horizon")
        if self.regime == "stochastic_mab":
            if self.means is None:
                raise ConfigError("stochastic_mab needs per-arm means", field="means")
            object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        elif self.regime == "stochastic_linear":
            if self.theta is None or self.features is None:
                raise ConfigError(
                    "stochastic_linear needs theta and features", field="theta"
                )
            theta = np.asarray(self.theta, dtype=float)
            if theta.shape != (self.features.ambient_dim,):
                raise ConfigError(
                    f"theta has shape {theta.shape}, features expect "
                    f"({self.features.ambient_dim},)",
                    field="theta",
                )
            object.__setattr__(self, "theta", theta)
        elif self.regime == "adversarial_script":
            if self.script is None:
                raise ConfigError(
                    "adversarial_script needs a (T, K) mean matrix", field="script"
                )
            script = np.asarray(self.script, dtype=float)
            if script.ndim != 2 or script.shape[0] < self.horizon:
                raise ConfigError(
                    f"script shape {script.shape} does not cover horizon "
                    f"{self.horizon}",
                    field="script",
                )
            object.__setattr__(self, "script", script)
        else:  # corrupted
            if self.base is None:
                raise ConfigError("corrupted regime needs a base spec", field="base")
            if self.base.regime == "corrupted":
                raise ConfigError("corrupted regimes do not nest", field="base")
            consumed = _schedule_consumption(self.corruption_schedule)
            if consumed > self.corruption_budget + _CERT_SLACK:
                raise ConfigError(
                    f"schedule consumes {consumed:.6g} > budget "
                    f"{self.corruption_budget:.6g}",
                    field="corruption_schedule",
                )

    @property
    def n_arms(self) -> int:
        if self.regime == "stochastic_mab":
            return self.means.size
        if self.regime == "stochastic_linear":
            return self.features.n_arms
        if self.regime == "adversarial_script":
            return self.script.shape[1]
        return self.base.n_arms

    def feature_set(self) -> FeatureSet | None:
        if self.regime == "corrupted":
            return self.base.feature_set()
        return self.features


def _schedule_consumption(schedule) -> float:
    per_round: dict[int, float] = {}
    for t, _arm, shift in schedule:
        per_round[t] = max(per_round.get(t, 0.0), abs(float(shift)))
    return float(sum(per_round.values()))


class Environment:
    """A playable instance of an EnvironmentSpec owning its rng state.

    Construction computes per-arm moment certificates from the worst-case
    mean magnitude across rounds and raises MomentViolation when any exceeds
    sigma (pass check_certificates=False to inspect doctored configs).  Noise
    is pre-drawn per start() so loss streams are pure functions of the seed.
    """

    def __init__(self, spec: EnvironmentSpec, seed: int = 0, check_certificates: bool = True):
        self.spec = spec
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._noise_buf: np.ndarray | None = None
        self._mean_mat = self._build_means()
        self._shift_cumsum = self._build_shift_accounting()
        self.certificates = self._certify()
        if check_certificates and not self.certified:
            worst = float(np.max(self.certificates))
            raise MomentViolation(
                f"certified eps-moment bound {worst:.6g} exceeds sigma="
                f"{spec.tail.sigma:.6g}; shrink the noise scale or the means"
            )

    @property
    def n_arms(self) -> int:
        return self.spec.n_arms

    @property
    def horizon(self) -> int:
        return self.spec.horizon

    @property
    def certified(self) -> bool:
        return bool(np.all(self.certificates <= self.spec.tail.sigma * (1 + _CERT_SLACK)))

    def _build_means(self) -> np.ndarray:
        """Dense (T, K) mean matrix including corruption shifts."""
        spec = self.spec
        t_max = spec.horizon
        base = spec.base if spec.regime == "corrupted" else spec
        if base.regime == "stochastic_mab":
            mat = np.broadcast_to(base.means, (t_max, base.means.size)).copy()
        elif base.regime == "stochastic_linear":
            row = base.features.features @ base.theta
            mat = np.broadcast_to(row, (t_max, row.size)).copy()
        else:
            mat = base.script[:t_max].copy()
        if spec.regime == "corrupted":
            for t, arm, shift in spec.corruption_schedule:
                if 1 <= t <= t_max:
                    mat[t - 1, arm] += shift
        return mat

    def _build_shift_accounting(self) -> np.ndarray:
        t_max = self.spec.horizon
        per_round = np.zeros(t_max + 1)
        if self.spec.regime == "corrupted":
            for t, _arm, shift in self.spec.corruption_schedule:
                if 1 <= t <= t_max:
                    per_round[t] = max(per_round[t], abs(float(shift)))
        return np.cumsum(per_round)

    def _certify(self) -> np.ndarray:
        worst_mean = np.abs(self._mean_mat).max(axis=0)
        return np.array(
            [moment_certificate(m, self.spec.noise, self.spec.tail) for m in worst_mean]
        )

    def clone(self, seed: int) -> "Environment":
        return Environment(self.spec, seed=seed, check_certificates=False)

    def start(self, horizon: int | None = None) -> None:
        """Reset the rng and pre-draw the round noise for a run."""
        t_max = self.spec.horizon if horizon is None else horizon
        if t_max > self.spec.horizon:
            raise ValueError(f"horizon {t_max} exceeds the spec horizon {self.spec.horizon}")
        self._rng = np.random.default_rng(self.seed)
        self._noise_buf = self.spec.noise.sample(self._rng, t_max)

    def sample_loss(self, t: int, arm: int) -> float:
        """Loss draw for the chosen arm in round t (1-based)."""
        if self._noise_buf is None:
            self.start()
        if not (1 <= t <= self._noise_buf.size):
            raise ValueError(f"round {t} outside the started horizon")
        consumed = self._shift_cumsum[min(t, self._shift_cumsum.size - 1)]
        if consumed > self.spec.corruption_budget + _CERT_SLACK and self.spec.regime == "corrupted":
            raise InvariantViolation("corruption accounting exceeded the budget")
        return float(self._mean_mat[t - 1, arm] + self._noise_buf[t - 1])

    def expected_losses(self, t: int) -> np.ndarray:
        """Per-arm loss means in round t, corruption included."""
        if not (1 <= t <= self.spec.horizon):
            raise ValueError(f"round {t} outside the horizon")
        return self._mean_mat[t - 1]

    def mean_matrix(self, t_max: int | None = None) -> np.ndarray:
        mat = self._mean_mat if t_max is None else self._mean_mat[:t_max]
        return mat.copy()

    def self_bounding_certificate(self) -> GapProfile | None:
        """Gap profile (Delta, optimal arm, C) where the regime defines one.

        Returns None for scripted adversaries.  Raises NonUniqueOptimum when
        two arms tie for the best mean in a regime that claims a unique
        optimum.
        """
        spec = self.spec
        base = spec.base if spec.regime == "corrupted" else spec
        if base.regime == "adversarial_script":
            return None
        means = (
            base.means
            if base.regime == "stochastic_mab"
            else base.features.features @ base.theta
        )
        best = float(means.min())
        ties = np.flatnonzero(means == best)
        if ties.size > 1:
            raise NonUniqueOptimum(
                f"arms {ties.tolist()} tie for the best mean {best}"
            )
        budget = spec.corruption_budget if spec.regime == "corrupted" else 0.0
        return GapProfile(means - best, int(ties[0]), budget)

    @property
    def is_adaptive(self) -> bool:
        return False

    def monte_carlo_moment_check(
        self, arm: int, n_draws: int = 10**6, seed: int = 0, order: float | None = None
    ) -> tuple[float, float, float]:
        """Empirical moment of the worst-mean round for one arm.

        Estimates E|loss|^order (default order = eps - 0.1, which converges
        fast enough for a usable standard error even under heavy tails) and
        returns (estimate, standard error, analytic bound implied by the
        calibration).  Deterministic given the seed.
        """
        spec = self.spec
        eps = spec.tail.epsilon
        if order is None:
            order = eps - 0.1
        t_worst = int(np.argmax(np.abs(self._mean_mat[:, arm])))
        mean = self._mean_mat[t_worst, arm]
        rng = np.random.default_rng(seed)
        draws = np.abs(mean + spec.noise.sample(rng, n_draws)) ** order
        est = float(draws.mean())
        se = float(draws.std(ddof=1) / math.sqrt(n_draws))
        bound = 2.0 ** (order - 1.0) * (
            abs(mean) ** order + spec.noise.scale**order * spec.noise.moment(order)
        )
        return est, se, bound

class AdaptiveAdversary:
    """Non-oblivious adversary driven by a scripted callback.

    ``mean_fn(t, history)`` receives the 1-based round index and the tuple of
    previously chosen arms and returns that round's per-arm mean vector.  No
    adaptive strategies are built in; callers supply the callback.  Means must
    stay within ``mean_bound`` in magnitude so the heavy-tail moment contract
    certifies up front; the bound is asserted on every materialized row.

    Rounds materialize in play order, so ``expected_losses`` and
    ``mean_matrix`` expose only realized rounds; the harness computes regret
    and the hindsight comparator post hoc from the realized rows.
    """

    def __init__(
        self,
        mean_fn,
        n_arms: int,
        noise: NoiseModel,
        tail: HeavyTailSpec,
        horizon: int,
        mean_bound: float,
        seed: int = 0,
        check_certificates: bool = True,
    ):
        if n_arms < 2:
            raise ValueError("need at least 2 arms")
        if horizon < 1:
            raise ValueError("horizon must be positive")
        if mean_bound < 0.0:
            raise ValueError("mean bound must be nonnegative")
        self.mean_fn = mean_fn
        self._n_arms = n_arms
        self.noise = noise
        self.tail = tail
        self._horizon = horizon
        self.mean_bound = mean_bound
        self.seed = seed
        cert = moment_certificate(mean_bound, noise, tail)
        self.certificates = np.full(n_arms, cert)
        if check_certificates and not self.certified:
            raise MomentViolation(
                f"certified eps-moment bound {cert:.6g} exceeds sigma="
                f"{tail.sigma:.6g} at the declared mean bound {mean_bound}"
            )
        self._history: list[int] = []
        self._rows: list[np.ndarray] = []
        self._noise_buf: np.ndarray | None = None

    @property
    def is_adaptive(self) -> bool:
        return True

    @property
    def n_arms(self) -> int:
        return self._n_arms

    @property
    def horizon(self) -> int:
        return self._horizon

    @property
    def certified(self) -> bool:
        return bool(np.all(self.certificates <= self.tail.sigma * (1 + _CERT_SLACK)))

    def clone(self, seed) -> "AdaptiveAdversary":
        return AdaptiveAdversary(
            self.mean_fn, self._n_arms, self.noise, self.tail, self._horizon,
            self.mean_bound, seed=seed, check_certificates=False,
        )

    def start(self, horizon: int | None = None) -> None:
        t_max = self._horizon if horizon is None else horizon
        if t_max > self._horizon:
            raise ValueError(f"horizon {t_max} exceeds the declared horizon {self._horizon}")
        rng = np.random.default_rng(self.seed)
        self._noise_buf = self.noise.sample(rng, t_max)
        self._history = []
        self._rows = []

    def sample_loss(self, t: int, arm: int) -> float:
        if self._noise_buf is None:
            self.start()
        if t != len(self._history) + 1:
            raise ValueError(
                f"adaptive rounds must be played in order; expected round "
                f"{len(self._history) + 1}, got {t}"
            )
        row = np.asarray(self.mean_fn(t, tuple(self._history)), dtype=float)
        if row.shape != (self._n_arms,):
            raise ValueError(f"callback returned shape {row.shape}, expected ({self._n_arms},)")
        if np.abs(row).max() > self.mean_bound + _CERT_SLACK:
            raise InvariantViolation(
                f"callback mean {np.abs(row).max():.6g} exceeds the declared "
                f"bound {self.mean_bound}"
            )
        self._rows.append(row)
        self._history.append(int(arm))
        return float(row[arm] + self._noise_buf[t - 1])

    def expected_losses(self, t: int) -> np.ndarray:
        if not (1 <= t <= len(self._rows)):
            raise ValueError(f"round {t} has not been materialized yet")
        return self._rows[t - 1]

    def mean_matrix(self, t_max: int | None = None) -> np.ndarray:
        rows = self._rows if t_max is None else self._rows[:t_max]
        return np.array(rows)

    def self_bounding_certificate(self):
        return None
