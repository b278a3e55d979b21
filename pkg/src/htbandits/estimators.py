"""Loss estimators, clipping, and the matching bonus functions.

Three estimators: importance weighting for plain multi-armed bandits, the
standard least-squares estimator for linear feedback, and a variance-reduced
least-squares estimator built on mean-centered features (biased per arm but
unbiased for loss differences).  Clipping zeroes any estimate whose magnitude
exceeds its threshold; the bonus upper-bounds the clipping bias so FTRL can
run on the shifted losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .design import covariance, solve_spd
from .errors import NearSingular, ZeroProbability
from .types import FeatureSet, HeavyTailSpec, SimplexDistribution, TINY_WEIGHT


@dataclass(frozen=True)
class EstimateBundle:
    """One round's raw estimate, clipped estimate, bonus, and thresholds.

    Clipping is a hard zero with |.| <= threshold kept (values exactly at the
    threshold survive), so |clipped_estimate| <= clip_thresholds entrywise and
    the bonus is nonnegative by construction.  Bonuses additionally sit below
    the thresholds whenever the calling policy's (gamma, s) coupling holds,
    which the policies assert per round.
    """

    raw_estimate: np.ndarray
    clipped_estimate: np.ndarray
    bonus: np.ndarray
    clip_thresholds: np.ndarray
    clipped_count: int


def _chol_solve(mat: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Cholesky solve raising NearSingular when the matrix is not PD."""
    try:
        c, lower = scipy.linalg.cho_factor(mat, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(mat)
        cond = float(eigs[-1] / eigs[0]) if eigs[0] > 0 else float("inf")
        raise NearSingular(f"{what} is not positive definite", cond) from exc
    return scipy.linalg.cho_solve((c, lower), rhs, check_finite=False)


def _abs_pow(x: np.ndarray, expo: float) -> np.ndarray:
    """|x|**expo with a zero short-circuit, avoiding pow domain issues at 0."""
    ax = np.abs(x)
    out = np.zeros_like(ax)
    nz = ax > 0.0
    out[nz] = np.exp(expo * np.log(ax[nz]))
    return out


def _clip(raw: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, int]:
    keep = np.abs(raw) <= s
    return np.where(keep, raw, 0.0), int(np.sum(~keep))


def mab_estimate(
    chosen_arm: int,
    loss: float,
    p: SimplexDistribution,
    s,
    spec: HeavyTailSpec,
) -> EstimateBundle:
    """Importance-weighted estimate loss * 1{a_t = a} / p_a, clipped at s.

    The bonus is sigma * p_a^(1-eps) * s_a^(1-eps) for every arm.
    """
    w = p.weights
    s = np.asarray(s, dtype=float)
    if w[chosen_arm] <= TINY_WEIGHT:
        raise ZeroProbability(f"arm {chosen_arm} has probability {w[chosen_arm]!r}")
    raw = np.zeros(w.size)
    raw[chosen_arm] = loss / w[chosen_arm]
    clipped, n_clip = _clip(raw, s)
    expo = 1.0 - spec.epsilon
    bonus = spec.sigma * w**expo * s**expo
    return EstimateBundle(raw, clipped, bonus, s, n_clip)


def linear_estimate(
    chosen_arm: int,
    loss: float,
    p: SimplexDistribution,
    features: FeatureSet,
    s,
    spec: HeavyTailSpec,
) -> EstimateBundle:
    """Least-squares estimate phi_a^T S_t^{-1} phi_{a_t} * loss, clipped at s.

    The bonus is sigma * s_a^(1-eps) * (phi_a^T S_t^{-1} phi_a)^(eps/2).
    """
    s = np.asarray(s, dtype=float)
    w = p.weights
    phi = features.features
    s_mat = phi.T @ (w[:, None] * phi)
    inv_phi = _chol_solve(s_mat, phi.T, "raw feature covariance")  # (d, K)
    raw = (phi @ inv_phi[:, chosen_arm]) * loss
    clipped, n_clip = _clip(raw, s)
    lev = np.einsum("ij,ji->i", phi, inv_phi)
    bonus = spec.sigma * s ** (1.0 - spec.epsilon) * _abs_pow(lev, spec.epsilon / 2.0)
    return EstimateBundle(raw, clipped, bonus, s, n_clip)


def vr_linear_estimate(
    chosen_arm: int,
    loss: float,
    p: SimplexDistribution,
    features: FeatureSet,
    s,
    spec: HeavyTailSpec,
) -> EstimateBundle:
    """Variance-reduced estimate on mean-centered features.

    With phibar_a = phi_a - mu_t and V_t the centered covariance under p:
    raw_a = phibar_a^T V_t^{-1} phibar_{a_t} * loss, and the bonus is
    sigma * sum_b p_b |phibar_a^T V_t^{-1} phibar_b|^eps * s_a^(1-eps).
    """
    s = np.asarray(s, dtype=float)
    w = p.weights
    phi = features.features
    mu = phi.T @ w
    centered = phi - mu
    v_mat = centered.T @ (w[:, None] * centered)
    inv_centered = _chol_solve(v_mat, centered.T, "centered feature covariance")
    cross = centered @ inv_centered  # (K, K): phibar_a^T V^{-1} phibar_b
    raw = cross[:, chosen_arm] * loss
    clipped, n_clip = _clip(raw, s)
    bonus = spec.sigma * (_abs_pow(cross, spec.epsilon) @ w) * s ** (1.0 - spec.epsilon)
    return EstimateBundle(raw, clipped, bonus, s, n_clip)


def variance_bound_check(
    p: SimplexDistribution, features: FeatureSet, epsilon: float
) -> tuple[float, float]:
    """Both sides of the centered-estimator variance bound, by double summation.

    Returns (lhs, rhs) with
    lhs = sum_{a,b} p_a p_b |phibar_a^T V(p)^{-1} phibar_b|^eps and
    rhs = 4 d^(eps/2) (1 - max_a p_a)^(2-eps); callers assert lhs <= rhs.
    """
    w = p.weights
    phi = features.features
    d = phi.shape[1]
    op = covariance(p, features, "centered")
    centered = phi - op.mean
    cross = centered @ solve_spd(op, centered.T)
    lhs = float(w @ _abs_pow(cross, epsilon) @ w)
    rhs = float(4.0 * d ** (epsilon / 2.0) * (1.0 - w.max()) ** (2.0 - epsilon))
    return lhs, rhs


def check_unbiased_differences(
    estimator: str,
    p: SimplexDistribution,
    features: FeatureSet | None,
    true_means,
    noise_half_width: float,
    n_samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo check that estimated loss differences are unbiased.

    Draws ``n_samples`` rounds of (arm ~ p, loss = mean + uniform noise of the
    given half width), forms the raw estimate vector each round, and compares
    the empirical mean of (est_a - est_b) against (mean_a - mean_b) over all
    arm pairs.  For the importance-weighted estimator the per-arm means are
    additionally checked (the stronger per-arm unbiasedness).  Returns the
    largest absolute deviation and the standard error at that worst pair;
    deterministic given the seed.  Bounded noise keeps the Monte Carlo
    standard errors usable; the property itself is distribution-free.
    """
    if estimator not in ("mab", "linear", "vr_linear"):
        raise ValueError(f"unknown estimator kind {estimator!r}")
    w = p.weights
    k = w.size
    means = np.asarray(true_means, dtype=float)
    rng = np.random.default_rng(seed)

    if estimator == "mab":
        cross = np.diag(1.0 / w)  # column c is the estimate vector for loss 1 at arm c
    else:
        phi = features.features
        kind = "raw" if estimator == "linear" else "centered"
        op = covariance(p, features, kind)
        base = phi if kind == "raw" else phi - op.mean
        cross = base @ solve_spd(op, base.T)  # (K, K)

    arms = np.searchsorted(np.cumsum(w), rng.random(n_samples), side="right")
    arms = np.minimum(arms, k - 1)
    losses = means[arms] + rng.uniform(-noise_half_width, noise_half_width, n_samples)
    # Per-arm sums of loss and loss^2 give exact sample moments of any linear
    # functional c^T of the estimate vector without materializing n x K data.
    u1 = np.bincount(arms, weights=losses, minlength=k) / n_samples
    u2 = np.bincount(arms, weights=losses**2, minlength=k) / n_samples

    diff_true = means[:, None] - means[None, :]
    dev_best, se_best = 0.0, 0.0
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            contrast = cross[a] - cross[b]
            m1 = float(contrast @ u1)
            m2 = float(contrast**2 @ u2)
            dev = abs(m1 - diff_true[a, b])
            se = np.sqrt(max(m2 - m1 * m1, 0.0) / n_samples)
            if dev > dev_best:
                dev_best, se_best = dev, se
    if estimator == "mab":
        # The importance-weighted estimator is unbiased per arm, not just in
        # differences.
        for a in range(k):
            m1 = float(cross[a] @ u1)
            m2 = float(cross[a] ** 2 @ u2)
            dev = abs(m1 - means[a])
            se = np.sqrt(max(m2 - m1 * m1, 0.0) / n_samples)
            if dev > dev_best:
                dev_best, se_best = dev, se
    return dev_best, se_best
