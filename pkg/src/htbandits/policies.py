"""The three heavy-tailed bandit policy loops.

Each policy exposes the same cycle: ``select(rng)`` computes this round's
play distribution and samples an arm, ``observe(loss)`` ingests the loss
feedback, updates the cumulative shifted losses (and, where applicable, the
learning rate), and returns a full RoundRecord.  ``step`` composes the two
for scripted runs.

* BobwMabPolicy: Tsallis-entropy FTRL on clipped, bonus-shifted importance
  weights; best-of-both-worlds for plain heavy-tailed bandits.
* AdversarialLinearPolicy: Shannon-entropy FTRL with a G-optimal exploration
  design and least-squares estimates; fixed horizon-tuned learning rate.
* BobwLinearPolicy: hybrid Tsallis FTRL with a centered exploration design,
  variance-reduced estimates, and the heavy-tailed stability-penalty-matching
  learning rate update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import centered_optimal_design, g_optimal_design, DESIGN_TOL
from .errors import InvariantViolation, HorizonTooShort, ZeroEntropy
from .estimators import EstimateBundle, linear_estimate, mab_estimate, vr_linear_estimate
from .ftrl import (
    hybrid_weights,
    shannon_weights,
    tsallis_entropy_value,
    tsallis_weights,
)
from .types import FeatureSet, HeavyTailSpec, RoundRecord, SimplexDistribution

# Advisory monitor on entropy growth between consecutive rounds; the theory
# only promises h_t = O(h_{t-1}) without a constant, so violations are
# reported, never fatal.
H_RATIO_LIMIT = 8.0
_GAMMA_SLACK = 1e-12
# Margin above the exponent-degeneracy boundary alpha = 1 - 1/epsilon at
# which the auxiliary Tsallis exponent would collide with the primary one.
_ALPHA_MARGIN = 0.01


@dataclass
class PolicyState:
    """Mutable per-policy state shared by all three algorithms."""

    cumulative_shifted_loss: np.ndarray
    beta: float
    spec: HeavyTailSpec
    design: SimplexDistribution
    round: int = 0
    beta_bar: float | None = None
    alpha: float | None = None
    alpha_bar: float | None = None
    horizon: int | None = None
    last_q: SimplexDistribution | None = None
    last_p: SimplexDistribution | None = None
    last_h: float | None = None


@dataclass(frozen=True)
class DerivedRoundParams:
    """Quantities derived from q_t before mixing: thresholds and exploration.

    ``z`` and ``w`` are the stability and exploration scalars of the adaptive
    learning rate; ``z`` depends on the mixed distribution and is therefore
    filled in only after mixing.
    """

    q_star: float
    q_tilde: np.ndarray
    a_tilde: int
    gamma: float
    s: np.ndarray
    z: float | None = None
    w: float | None = None


def default_alpha(n_arms: int) -> float:
    """Primary Tsallis exponent for the linear BOBW policy, in [1/2, 1)."""
    if n_arms < 2:
        raise ValueError("need at least 2 arms")
    return max(0.5, 1.0 - 1.0 / math.log(max(n_arms, 3)))


def mab_beta_schedule(t: int, n_arms: int, spec: HeavyTailSpec) -> float:
    """Inverse learning rate sigma^(1/eps) * max{8 eps K^((eps-1)/eps) / (eps-1), t^(1/eps)}.

    The first branch inflates beta for small t so the exploration rate stays
    at most 1/2 across all rounds.
    """
    if t < 1:
        raise ValueError("rounds are 1-based")
    eps = spec.epsilon
    floor = 8.0 * eps * n_arms ** ((eps - 1.0) / eps) / (eps - 1.0)
    return spec.sigma ** (1.0 / eps) * max(floor, t ** (1.0 / eps))


def mab_round_params(
    q: SimplexDistribution, beta: float, n_arms: int, spec: HeavyTailSpec
) -> DerivedRoundParams:
    """Clipping thresholds and exploration rate for the MAB policy.

    Uses the Tsallis exponent alpha = 1/eps.  The thresholds are
    s_a = (1-alpha) qtilde_a^(alpha-1) beta / 8 with qtilde_a = min(q_a, q*),
    and gamma = sigma^(1/(eps-1)) K s_{atilde}^(eps/(1-eps)).  gamma <= 1/2
    is guaranteed by the beta schedule and asserted, never clamped.
    """
    eps = spec.epsilon
    alpha = 1.0 / eps
    w = q.weights
    q_max = float(w.max())
    q_star = min(q_max, 1.0 - q_max)
    q_tilde = np.minimum(w, q_star)
    a_tilde = int(np.argmax(w))
    s = (1.0 - alpha) * q_tilde ** (alpha - 1.0) * beta / 8.0
    gamma = spec.sigma ** (1.0 / (eps - 1.0)) * n_arms * s[a_tilde] ** (eps / (1.0 - eps))
    if gamma > 0.5 + _GAMMA_SLACK:
        raise InvariantViolation(
            f"exploration rate {gamma} exceeds 1/2; the beta schedule is broken"
        )
    return DerivedRoundParams(q_star, q_tilde, a_tilde, float(gamma), s)


def alg2_constants(
    n_arms: int, dim: int, horizon: int, spec: HeavyTailSpec
) -> tuple[float, float, np.ndarray]:
    """Time-invariant (beta, gamma, s) for the adversarial linear policy.

    beta = (sigma d^(eps/2) T / log K)^(1/eps), gamma = 4 sigma^(2/eps) d / beta^2,
    s = beta/2 for every arm.  Requires gamma <= 1/2, i.e. T >= 8^(eps/2) log K.
    """
    if n_arms < 2:
        raise ValueError("need at least 2 arms (log K degenerates at K=1)")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    eps, sigma = spec.epsilon, spec.sigma
    beta = (sigma * dim ** (eps / 2.0) * horizon / math.log(n_arms)) ** (1.0 / eps)
    gamma = 4.0 * sigma ** (2.0 / eps) * dim / beta**2
    if gamma > 0.5:
        t_min = math.ceil(8.0 ** (eps / 2.0) * math.log(n_arms))
        raise HorizonTooShort(
            f"horizon {horizon} gives exploration rate {gamma:.4f} > 1/2; "
            f"need T >= {t_min}"
        )
    return beta, gamma, np.full(n_arms, beta / 2.0)


def alg3_round_params(
    q: SimplexDistribution,
    beta: float,
    dim: int,
    spec: HeavyTailSpec,
    alpha: float,
) -> DerivedRoundParams:
    """Exploration rate, thresholds, and the exploration scalar w for the
    adaptive linear policy.

    gamma_t = 256 (1-alpha)^-2 sigma^(2/eps) d beta^-2 q*^(2(1-alpha)) and
    s_{t,a} = (1-alpha) beta q*^(alpha-1) / 8, identical across arms (the
    threshold uses q*, not the per-arm qtilde).  The stability scalar z
    depends on the mixed distribution and is filled in after mixing.
    """
    eps, sigma = spec.epsilon, spec.sigma
    w_vec = q.weights
    q_max = float(w_vec.max())
    q_star = min(q_max, 1.0 - q_max)
    q_tilde = np.minimum(w_vec, q_star)
    a_tilde = int(np.argmax(w_vec))
    one_m_a = 1.0 - alpha
    gamma = 256.0 * one_m_a**-2 * sigma ** (2.0 / eps) * dim * beta**-2 * q_star ** (2.0 * one_m_a)
    if gamma > 0.5 + _GAMMA_SLACK:
        raise InvariantViolation(
            f"exploration rate {gamma} exceeds 1/2; beta_1 was sized too small"
        )
    s_scalar = one_m_a * beta * q_star ** (alpha - 1.0) / 8.0
    s = np.full(w_vec.size, s_scalar)
    w_scalar = sigma ** (3.0 / eps) * one_m_a**-2 * dim * q_star ** (2.0 * one_m_a)
    return DerivedRoundParams(q_star, q_tilde, a_tilde, float(gamma), s, z=None, w=w_scalar)


def alg3_stability_scalar(
    q_star: float, p_max: float, dim: int, spec: HeavyTailSpec, alpha: float
) -> float:
    """Stability scalar z_t, computed once the mixed distribution is known."""
    eps, sigma = spec.epsilon, spec.sigma
    return (
        (1.0 - alpha) ** (1.0 - eps)
        * sigma
        * q_star ** ((eps - 1.0) * (1.0 - alpha))
        * dim ** (eps / 2.0)
        * (1.0 - p_max) ** (2.0 - eps)
    )


def htspm_update(beta_t: float, z_t: float, w_t: float, h_t: float, spec: HeavyTailSpec) -> float:
    """Stability-penalty-matching learning-rate update.

    beta_{t+1} = beta_t + (beta_t^(1-eps) z_t + beta_t^-2 w_t) / h_t, where the
    entropy of the current FTRL iterate estimates the next penalty.  The
    result never decreases.
    """
    if beta_t <= 0.0:
        raise ValueError("beta must be positive")
    if z_t < 0.0 or w_t < 0.0:
        raise ValueError("stability and exploration scalars must be nonnegative")
    if h_t <= 1e-300:
        raise ZeroEntropy(
            "FTRL iterate collapsed onto a vertex; cannot estimate the penalty"
        )
    eps = spec.epsilon
    return beta_t + (beta_t ** (1.0 - eps) * z_t + beta_t**-2 * w_t) / h_t


def _sample_arm(weights: np.ndarray, rng) -> int:
    """Inverse-CDF draw over the stored arm order."""
    cdf = np.cumsum(weights)
    arm = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(arm, weights.size - 1)


class _PolicyBase:
    """Common select/observe plumbing: flag bookkeeping and stepping."""

    state: PolicyState
    _bonus_slack: float

    def __init__(self):
        self._pending = None
        self._prev_beta = 0.0
        self._prev_h = None

    def select(self, rng) -> tuple[SimplexDistribution, int]:
        raise NotImplementedError

    def observe(self, loss: float) -> RoundRecord:
        raise NotImplementedError

    def step(self, loss_of, rng) -> RoundRecord:
        """Run one full round; ``loss_of`` maps the sampled arm to its loss."""
        _, arm = self.select(rng)
        return self.observe(float(loss_of(arm)))

    def _flags(
        self,
        gamma: float,
        bundle: EstimateBundle,
        beta: float,
        p_weights: np.ndarray,
        h: float | None = None,
    ) -> dict:
        flags = {
            "gamma_le_half": bool(gamma <= 0.5 + _GAMMA_SLACK),
            "bonus_le_clip": bool(
                np.all(bundle.bonus <= bundle.clip_thresholds * self._bonus_slack)
            ),
            "beta_monotone": bool(beta >= self._prev_beta),
            "simplex_ok": bool(
                abs(float(p_weights.sum()) - 1.0) <= 1e-9 and p_weights.min() >= 0.0
            ),
            "clip_contained": bool(
                np.all(np.abs(bundle.clipped_estimate) <= bundle.clip_thresholds)
            ),
        }
        if h is not None:
            prev = self._prev_h
            flags["h_ratio_ok"] = bool(prev is None or h <= H_RATIO_LIMIT * prev + 1e-12)
            self._prev_h = h
        self._prev_beta = beta
        return flags


class BobwMabPolicy(_PolicyBase):
    """Best-of-both-worlds policy for plain heavy-tailed bandits.

    Tsallis-entropy FTRL (exponent 1/eps) over cumulative clipped importance-
    weighted losses shifted by the bonus, with uniform exploration mixed in at
    the schedule-controlled rate.
    """

    def __init__(self, n_arms: int, spec: HeavyTailSpec):
        super().__init__()
        if n_arms < 2:
            raise ValueError("need at least 2 arms")
        self.n_arms = n_arms
        self.alpha = 1.0 / spec.epsilon
        self.state = PolicyState(
            cumulative_shifted_loss=np.zeros(n_arms),
            beta=mab_beta_schedule(1, n_arms, spec),
            spec=spec,
            design=SimplexDistribution.uniform(n_arms),
            alpha=self.alpha,
        )
        self._bonus_slack = 1.0 + 1e-9

    def select(self, rng) -> tuple[SimplexDistribution, int]:
        if self._pending is not None:
            raise RuntimeError("select called twice without observe")
        st = self.state
        t = st.round + 1
        beta = mab_beta_schedule(t, self.n_arms, st.spec)
        q = SimplexDistribution._trusted(
            tsallis_weights(st.cumulative_shifted_loss, beta, self.alpha)
        )
        params = mab_round_params(q, beta, self.n_arms, st.spec)
        p_w = (1.0 - params.gamma) * q.weights + params.gamma * st.design.weights
        p = SimplexDistribution._trusted(p_w)
        arm = _sample_arm(p.weights, rng)
        st.beta = beta
        st.last_q, st.last_p = q, p
        self._pending = (t, q, p, params, arm, beta)
        return p, arm

    def observe(self, loss: float) -> RoundRecord:
        if self._pending is None:
            raise RuntimeError("observe called before select")
        t, q, p, params, arm, beta = self._pending
        self._pending = None
        st = self.state
        bundle = mab_estimate(arm, loss, p, params.s, st.spec)
        st.cumulative_shifted_loss += bundle.clipped_estimate - bundle.bonus
        h = tsallis_entropy_value(q, self.alpha)
        flags = self._flags(params.gamma, bundle, beta, p.weights, h=h)
        st.last_h = h
        st.round = t
        return RoundRecord(
            t=t,
            q=q,
            p=p,
            chosen_arm=arm,
            observed_loss=loss,
            clipped_estimate=bundle.clipped_estimate,
            bonus=bundle.bonus,
            gamma=params.gamma,
            clip_thresholds=bundle.clip_thresholds,
            beta=beta,
            invariant_flags=flags,
            entropy=h,
        )


class AdversarialLinearPolicy(_PolicyBase):
    """Exponential-weights policy for adversarial heavy-tailed linear bandits.

    Requires the horizon up front: the (constant) learning rate, clipping
    threshold, and exploration rate all depend on T.  Exploration mixes in a
    G-optimal design over the raw arm features.
    """

    def __init__(
        self,
        features: FeatureSet,
        spec: HeavyTailSpec,
        horizon: int,
        design_tol: float = DESIGN_TOL,
    ):
        super().__init__()
        self.features = features
        self.n_arms = features.n_arms
        beta, gamma, s = alg2_constants(self.n_arms, features.ambient_dim, horizon, spec)
        self.beta, self.gamma, self.s = beta, gamma, s
        design = g_optimal_design(features, design_tol).distribution
        self.state = PolicyState(
            cumulative_shifted_loss=np.zeros(self.n_arms),
            beta=beta,
            spec=spec,
            design=design,
            horizon=horizon,
        )
        self._bonus_slack = (1.0 + design_tol) * (1.0 + 1e-9)

    def select(self, rng) -> tuple[SimplexDistribution, int]:
        if self._pending is not None:
            raise RuntimeError("select called twice without observe")
        st = self.state
        t = st.round + 1
        q = SimplexDistribution._trusted(
            shannon_weights(st.cumulative_shifted_loss, self.beta)
        )
        p_w = (1.0 - self.gamma) * q.weights + self.gamma * st.design.weights
        p = SimplexDistribution._trusted(p_w)
        arm = _sample_arm(p.weights, rng)
        st.last_q, st.last_p = q, p
        self._pending = (t, q, p, arm)
        return p, arm

    def observe(self, loss: float) -> RoundRecord:
        if self._pending is None:
            raise RuntimeError("observe called before select")
        t, q, p, arm = self._pending
        self._pending = None
        st = self.state
        bundle = linear_estimate(arm, loss, p, self.features, self.s, st.spec)
        st.cumulative_shifted_loss += bundle.clipped_estimate - bundle.bonus
        flags = self._flags(self.gamma, bundle, self.beta, p.weights)
        st.round = t
        return RoundRecord(
            t=t,
            q=q,
            p=p,
            chosen_arm=arm,
            observed_loss=loss,
            clipped_estimate=bundle.clipped_estimate,
            bonus=bundle.bonus,
            gamma=self.gamma,
            clip_thresholds=bundle.clip_thresholds,
            beta=self.beta,
            invariant_flags=flags,
        )


class BobwLinearPolicy(_PolicyBase):
    """Best-of-both-worlds policy for heavy-tailed linear bandits.

    Hybrid Tsallis FTRL (a primary exponent alpha plus a weaker auxiliary
    term that stabilizes consecutive iterates), exploration mixed from the
    mean-centered log-det design, variance-reduced least-squares estimates,
    and the stability-penalty-matching learning-rate update.
    """

    def __init__(
        self,
        features: FeatureSet,
        spec: HeavyTailSpec,
        alpha: float | None = None,
        beta1: float | None = None,
        beta_bar: float | None = None,
        design_tol: float = DESIGN_TOL,
    ):
        super().__init__()
        self.features = features
        self.n_arms = features.n_arms
        self.dim = features.ambient_dim
        eps, sigma = spec.epsilon, spec.sigma
        if alpha is None:
            # Keep the auxiliary exponent strictly below the primary one:
            # alpha_bar = (eps-1)(1-alpha) < alpha requires alpha > 1 - 1/eps.
            alpha = max(default_alpha(self.n_arms), 1.0 - 1.0 / eps + _ALPHA_MARGIN)
        if not (0.5 <= alpha < 1.0):
            raise ValueError(f"alpha must lie in [1/2, 1), got {alpha}")
        alpha_bar = (eps - 1.0) * (1.0 - alpha)
        if not (0.0 < alpha_bar < alpha):
            raise ValueError(
                f"auxiliary exponent {alpha_bar} must be strictly below alpha={alpha}; "
                "increase alpha above 1 - 1/epsilon"
            )
        one_m_a = 1.0 - alpha
        if beta1 is None:
            # Smallest closed form forcing gamma_t <= 1/2 for every q (with a
            # 2x safety factor), since q* <= 1/2 always and beta never decays.
            beta1 = (
                math.sqrt(1024.0)
                * one_m_a**-1
                * sigma ** (1.0 / eps)
                * math.sqrt(self.dim)
                * 0.5**one_m_a
            )
        if beta_bar is None:
            beta_bar = (
                64.0
                * one_m_a**-3
                * self.dim**eps
                * beta1 ** (1.0 - eps)
                * max(sigma ** (3.0 / eps), sigma)
            )
        self.alpha, self.alpha_bar, self.beta_bar = alpha, alpha_bar, beta_bar
        design = centered_optimal_design(features, design_tol).distribution
        self.state = PolicyState(
            cumulative_shifted_loss=np.zeros(self.n_arms),
            beta=beta1,
            spec=spec,
            design=design,
            beta_bar=beta_bar,
            alpha=alpha,
            alpha_bar=alpha_bar,
        )
        self._bonus_slack = (1.0 + design_tol) * (1.0 + 1e-9)

    def select(self, rng) -> tuple[SimplexDistribution, int]:
        if self._pending is not None:
            raise RuntimeError("select called twice without observe")
        st = self.state
        t = st.round + 1
        q = SimplexDistribution._trusted(
            hybrid_weights(
                st.cumulative_shifted_loss, st.beta, self.alpha, self.beta_bar, self.alpha_bar
            )
        )
        params = alg3_round_params(q, st.beta, self.dim, st.spec, self.alpha)
        p_w = (1.0 - params.gamma) * q.weights + params.gamma * st.design.weights
        p = SimplexDistribution._trusted(p_w)
        arm = _sample_arm(p.weights, rng)
        st.last_q, st.last_p = q, p
        self._pending = (t, q, p, params, arm, st.beta)
        return p, arm

    def observe(self, loss: float) -> RoundRecord:
        if self._pending is None:
            raise RuntimeError("observe called before select")
        t, q, p, params, arm, beta = self._pending
        self._pending = None
        st = self.state
        bundle = vr_linear_estimate(arm, loss, p, self.features, params.s, st.spec)
        st.cumulative_shifted_loss += bundle.clipped_estimate - bundle.bonus
        h = tsallis_entropy_value(q, self.alpha)
        z = alg3_stability_scalar(
            params.q_star, float(p.weights.max()), self.dim, st.spec, self.alpha
        )
        w = params.w
        flags = self._flags(params.gamma, bundle, beta, p.weights, h=h)
        st.beta = htspm_update(beta, z, w, h, st.spec)
        st.last_h = h
        st.round = t
        return RoundRecord(
            t=t,
            q=q,
            p=p,
            chosen_arm=arm,
            observed_loss=loss,
            clipped_estimate=bundle.clipped_estimate,
            bonus=bundle.bonus,
            gamma=params.gamma,
            clip_thresholds=bundle.clip_thresholds,
            beta=beta,
            invariant_flags=flags,
            z=z,
            w=w,
            entropy=h,
        )
