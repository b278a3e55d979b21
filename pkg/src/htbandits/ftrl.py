"""Per-round FTRL solves over the probability simplex.

Three regularizers: negative Shannon entropy (closed form), alpha-Tsallis
entropy, and the hybrid beta*psi_alpha + beta_bar*psi_alpha_bar pair that
stabilizes the learning-rate-adaptive linear policy.  The Tsallis-family
solves run a monotone bisection on the simplex dual variable; the dual map
is strictly monotone, so bisection is unconditionally convergent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NoConvergence, NonFinite
from .types import SimplexDistribution

# Convergence contract: the returned weights sum to 1 within SUM_TOL; the
# bisection targets BISECT_TOL so downstream q**(alpha-1) powers carry at most
# ~1e-6 relative error at alpha >= 0.5.
SUM_TOL = 1e-12
_BISECT_TOL = 1e-13
_MAX_ITER = 200


@dataclass(frozen=True)
class RegularizerSpec:
    """Which regularizer an FTRL instance runs, with its exponents.

    kind is one of "shannon", "tsallis", "hybrid".  For "tsallis" only
    ``alpha`` applies; "hybrid" additionally needs ``alpha_bar < alpha`` and a
    nonnegative ``beta_bar`` weight on the auxiliary term.
    """

    kind: str
    alpha: float | None = None
    alpha_bar: float | None = None
    beta_bar: float | None = None

    def __post_init__(self):
        if self.kind not in ("shannon", "tsallis", "hybrid"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.kind in ("tsallis", "hybrid"):
            if self.alpha is None or not (0.0 < self.alpha < 1.0):
                raise ValueError("tsallis exponent alpha must lie in (0, 1)")
        if self.kind == "hybrid":
            if self.alpha_bar is None or not (0.0 < self.alpha_bar < self.alpha):
                raise ValueError("hybrid needs 0 < alpha_bar < alpha")
            if self.beta_bar is None or self.beta_bar < 0.0:
                raise ValueError("hybrid needs beta_bar >= 0")

    def solve(self, cum_loss, beta: float) -> "FtrlSolution":
        if self.kind == "shannon":
            return solve_shannon(cum_loss, beta)
        if self.kind == "tsallis":
            return solve_tsallis(cum_loss, beta, self.alpha)
        return solve_hybrid(cum_loss, beta, self.alpha, self.beta_bar, self.alpha_bar)


@dataclass(frozen=True)
class FtrlSolution:
    """An accepted FTRL minimizer with its simplex multiplier and residual."""

    q: SimplexDistribution
    dual_value: float
    iterations: int
    residual: float


def tsallis_entropy_value(q: SimplexDistribution, alpha: float) -> float:
    """Negated alpha-Tsallis regularizer, (1/alpha) (sum_a q_a^alpha - 1) >= 0."""
    w = q.weights if isinstance(q, SimplexDistribution) else np.asarray(q, dtype=float)
    return float((np.sum(w**alpha) - 1.0) / alpha)


def _check_inputs(cum_loss, beta):
    loss = np.asarray(cum_loss, dtype=float)
    if loss.ndim != 1 or loss.size < 1:
        raise ValueError("cumulative loss must be a 1-d vector")
    if not np.all(np.isfinite(loss)):
        raise NonFinite("cumulative loss contains NaN or infinity")
    if not (beta > 0.0 and math.isfinite(beta)):
        raise ValueError(f"inverse learning rate must be positive and finite, got {beta}")
    return loss


def solve_shannon(cum_loss, beta: float) -> FtrlSolution:
    """Exponential weights: exact argmin of <L, q> + beta * sum_a q_a log q_a."""
    loss = _check_inputs(cum_loss, beta)
    shifted = loss - loss.min()
    w = np.exp(-shifted / beta)
    z = w.sum()
    q = w / z
    # KKT multiplier of the simplex constraint at the optimum.
    dual = -beta - float(loss.min()) + beta * math.log(z)
    return FtrlSolution(SimplexDistribution(q), dual, 1, abs(float(q.sum()) - 1.0))


@njit(cache=True, nogil=True)
def _tsallis_dual(loss, beta, alpha, max_iter, tol):
    k = loss.size
    lmin = loss[0]
    for i in range(1, k):
        if loss[i] < lmin:
            lmin = loss[i]
    expo = 1.0 / (alpha - 1.0)
    lo = -lmin
    hi = -lmin + beta * k ** (1.0 - alpha)
    c = hi
    resid = np.inf
    iters = 0
    while iters < max_iter:
        iters += 1
        c = 0.5 * (lo + hi)
        s = 0.0
        for i in range(k):
            s += ((loss[i] + c) / beta) ** expo
        resid = s - 1.0
        if abs(resid) <= tol:
            break
        if s > 1.0:
            lo = c
        else:
            hi = c
        if hi - lo <= 1e-16 * max(1.0, abs(c)):
            break
    q = np.empty(k)
    for i in range(k):
        q[i] = ((loss[i] + c) / beta) ** expo
    return q, c, iters, resid


@njit(cache=True, nogil=True)
def _hybrid_dual(loss, beta, alpha, beta_bar, alpha_bar, max_iter, tol):
    k = loss.size
    lmin = loss[0]
    for i in range(1, k):
        if loss[i] < lmin:
            lmin = loss[i]
    ea = alpha - 1.0
    eb = alpha_bar - 1.0
    lo = -lmin
    hi = -lmin + beta * k ** (1.0 - alpha) + beta_bar * k ** (1.0 - alpha_bar)
    x = np.empty(k)
    c = hi
    resid = np.inf
    iters = 0
    while iters < max_iter:
        iters += 1
        c = 0.5 * (lo + hi)
        s = 0.0
        for i in range(k):
            y = loss[i] + c
            # Per-coordinate solve of beta*x^ea + beta_bar*x^eb = y in u=log x.
            # The map is convex and decreasing in u, and the start below sits on
            # the >= y side, so Newton increases monotonically to the root.
            u = math.log(y / beta) / ea
            if beta_bar > 0.0:
                u2 = math.log(y / beta_bar) / eb
                if u2 > u:
                    u = u2
            for _ in range(80):
                ta = beta * math.exp(ea * u)
                tb = beta_bar * math.exp(eb * u)
                diff = ta + tb - y
                if diff <= 1e-15 * y:
                    break
                u += diff / (ta * (-ea) + tb * (-eb))
            xi = math.exp(u)
            x[i] = xi
            s += xi
        resid = s - 1.0
        if abs(resid) <= tol:
            break
        if s > 1.0:
            lo = c
        else:
            hi = c
        if hi - lo <= 1e-16 * max(1.0, abs(c)):
            break
    return x, c, iters, resid


def shannon_weights(loss: np.ndarray, beta: float) -> np.ndarray:
    """Hot-path exponential weights on pre-validated float64 losses."""
    shifted = loss - loss.min()
    w = np.exp(-shifted / beta)
    return w / w.sum()


def tsallis_weights(loss: np.ndarray, beta: float, alpha: float) -> np.ndarray:
    """Hot-path Tsallis solve on pre-validated float64 losses."""
    q, _, iters, resid = _tsallis_dual(loss, beta, alpha, _MAX_ITER, _BISECT_TOL)
    if not abs(resid) <= SUM_TOL:
        raise NoConvergence(
            f"tsallis dual bisection stalled at |sum q - 1| = {abs(resid):.3e} "
            f"after {iters} iterations; loss magnitudes are pathological"
        )
    return q / q.sum()


def hybrid_weights(
    loss: np.ndarray, beta: float, alpha: float, beta_bar: float, alpha_bar: float
) -> np.ndarray:
    """Hot-path hybrid solve on pre-validated float64 losses."""
    q, _, iters, resid = _hybrid_dual(loss, beta, alpha, beta_bar, alpha_bar, _MAX_ITER, _BISECT_TOL)
    if not abs(resid) <= SUM_TOL:
        raise NoConvergence(
            f"hybrid dual bisection stalled at |sum q - 1| = {abs(resid):.3e} "
            f"after {iters} iterations; loss magnitudes are pathological"
        )
    return q / q.sum()


def solve_tsallis(cum_loss, beta: float, alpha: float) -> FtrlSolution:
    """Unique minimizer of <L, q> + beta * psi_alpha(q) over the simplex.

    Stationarity gives q_a = ((L_a + c) / beta)^(1/(alpha-1)) for a shared
    shift c, found by bisection on the bracket
    [-min L, -min L + beta * K^(1-alpha)] which provably contains the root.
    """
    loss = _check_inputs(cum_loss, beta)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"tsallis exponent must lie in (0, 1), got {alpha}")
    q, c, iters, resid = _tsallis_dual(loss, beta, alpha, _MAX_ITER, _BISECT_TOL)
    if not abs(resid) <= SUM_TOL:
        raise NoConvergence(
            f"tsallis dual bisection stalled at |sum q - 1| = {abs(resid):.3e} "
            f"after {iters} iterations; loss magnitudes are pathological"
        )
    dual = c - beta / alpha
    return FtrlSolution(SimplexDistribution(q), dual, int(iters), abs(float(resid)))


def solve_hybrid(
    cum_loss, beta: float, alpha: float, beta_bar: float, alpha_bar: float
) -> FtrlSolution:
    """Minimizer of <L, q> + beta * psi_alpha(q) + beta_bar * psi_alpha_bar(q).

    The per-coordinate map x -> beta x^(alpha-1) + beta_bar x^(alpha_bar-1)
    is strictly decreasing on (0, inf), so each coordinate is a monotone
    scalar root-solve inside an outer bisection on the simplex multiplier.
    """
    loss = _check_inputs(cum_loss, beta)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"tsallis exponent must lie in (0, 1), got {alpha}")
    if not (0.0 < alpha_bar < alpha):
        raise ValueError(f"need 0 < alpha_bar < alpha, got {alpha_bar} vs {alpha}")
    if beta_bar < 0.0:
        raise ValueError(f"beta_bar must be nonnegative, got {beta_bar}")
    q, c, iters, resid = _hybrid_dual(
        loss, beta, alpha, beta_bar, alpha_bar, _MAX_ITER, _BISECT_TOL
    )
    if not abs(resid) <= SUM_TOL:
        raise NoConvergence(
            f"hybrid dual bisection stalled at |sum q - 1| = {abs(resid):.3e} "
            f"after {iters} iterations; loss magnitudes are pathological"
        )
    dual = c - beta / alpha - (beta_bar / alpha_bar if beta_bar > 0.0 else 0.0)
    return FtrlSolution(SimplexDistribution(q), dual, int(iters), abs(float(resid)))


def ftrl_objective(q, cum_loss, beta, spec: RegularizerSpec) -> float:
    """Objective value <L, q> + regularizer, used by optimality certificates."""
    w = q.weights if isinstance(q, SimplexDistribution) else np.asarray(q, dtype=float)
    loss = np.asarray(cum_loss, dtype=float)
    val = float(w @ loss)
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.kind == "shannon":
            val += beta * float(np.sum(np.where(w > 0.0, w * np.log(w), 0.0)))
        else:
            val += -beta / spec.alpha * float(np.sum(w**spec.alpha - w))
            if spec.kind == "hybrid" and spec.beta_bar > 0.0:
                val += -spec.beta_bar / spec.alpha_bar * float(
                    np.sum(w**spec.alpha_bar - w)
                )
    return val
