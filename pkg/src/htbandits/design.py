"""Exploration designs over arm features.

Two criteria: the classical G-optimal design on raw features (max leverage
phi^T S(p)^{-1} phi <= d at the optimum, by Kiefer-Wolfowitz), and the
mean-centered log-det design used by the variance-reduced linear policy.
The centered problem reduces to a G-optimal design on features lifted to
(1, phi) in d+1 dimensions, because the lifted information matrix has
determinant equal to det V(p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import AffinelyDegenerate, NearSingular, NoConvergence
from .types import FeatureSet, SimplexDistribution

DESIGN_TOL = 1e-3
_PRUNE_TOL = 1e-9


@dataclass(frozen=True)
class DesignResult:
    """An accepted design with its certificate value.

    ``max_leverage`` is max_a phi_a^T S(p)^{-1} phi_a for raw designs and
    max_a ||phi_a - mu(p)||^2 in the V(p)^{-1} norm for centered ones; both are
    certified <= d * (1 + tol).
    """

    distribution: SimplexDistribution
    max_leverage: float
    iterations: int


@dataclass(frozen=True)
class CovarianceOperator:
    """A raw (sum p phi phi^T) or mean-centered feature covariance."""

    matrix: np.ndarray
    kind: str
    mean: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if self.kind not in ("raw", "centered"):
            raise ValueError(f"kind must be 'raw' or 'centered', got {self.kind!r}")
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("covariance matrix must be square")
        if not np.allclose(m, m.T, atol=1e-12, rtol=0.0):
            raise ValueError("covariance matrix must be symmetric within 1e-12")
        eigs = np.linalg.eigvalsh(m)
        if eigs[0] < -1e-10 * max(np.trace(m), 0.0):
            raise ValueError("covariance matrix has a significantly negative eigenvalue")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        mean = np.asarray(self.mean, dtype=float).copy()
        mean.flags.writeable = False
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def covariance(p: SimplexDistribution, features: FeatureSet, kind: str = "raw") -> CovarianceOperator:
    """Feature covariance under p: raw second moment or centered version."""
    w = p.weights if isinstance(p, SimplexDistribution) else np.asarray(p, dtype=float)
    phi = features.features
    if w.size != phi.shape[0]:
        raise ValueError(f"distribution has {w.size} arms but features have {phi.shape[0]}")
    if kind == "raw":
        mat = phi.T @ (w[:, None] * phi)
        mean = np.zeros(phi.shape[1])
    elif kind == "centered":
        mean = phi.T @ w
        centered = phi - mean
        mat = centered.T @ (w[:, None] * centered)
    else:
        raise ValueError(f"kind must be 'raw' or 'centered', got {kind!r}")
    mat = 0.5 * (mat + mat.T)
    return CovarianceOperator(mat, kind, mean)


def solve_spd(op: CovarianceOperator, rhs) -> np.ndarray:
    """Solve op.matrix @ x = rhs for a positive definite operator.

    Raises NearSingular (with a condition estimate) when the smallest
    eigenvalue drops to 1e-12 of the trace, which signals that exploration
    mixing failed to regularize the covariance.
    """
    mat = op.matrix
    b = np.asarray(rhs, dtype=float)
    eigs = np.linalg.eigvalsh(mat)
    tr = float(np.trace(mat))
    if eigs[0] <= 1e-12 * tr or tr <= 0.0:
        cond = float(eigs[-1] / eigs[0]) if eigs[0] > 0 else math.inf
        raise NearSingular("covariance operator is not safely positive definite", cond)
    c, lower = scipy.linalg.cho_factor(mat, check_finite=False)
    x = scipy.linalg.cho_solve((c, lower), b, check_finite=False)
    resid = np.linalg.norm(mat @ x - b)
    scale = np.linalg.norm(b)
    if scale > 0 and resid > 1e-10 * scale:
        cond = float(eigs[-1] / eigs[0])
        raise NearSingular("SPD solve residual exceeded 1e-10", cond)
    return x


def _leverages(phi: np.ndarray, s_mat: np.ndarray) -> np.ndarray:
    sol = np.linalg.solve(s_mat, phi.T)
    return np.einsum("ij,ji->i", phi, sol)


def g_optimal_design(features: FeatureSet, tol: float = DESIGN_TOL) -> DesignResult:
    """G-optimal (log-det) design by Frank-Wolfe with exact line search.

    Starts uniform and alternates Wynn steps (mass onto the max-leverage arm)
    with vertex-exchange steps that also drain the least useful support atom;
    both use the closed-form optimal step for rank-one log-det updates.  Stops
    once max_a phi_a^T S(p)^{-1} phi_a <= d (1 + tol).
    """
    if tol <= 0.0:
        raise ValueError("design tolerance must be positive")
    phi = features.features
    k, d = phi.shape
    p = np.full(k, 1.0 / k)
    s_mat = phi.T @ (p[:, None] * phi)
    cap = int(50 * d * max(1.0, math.log(k))) + 200
    target = d * (1.0 + tol)
    lev = _leverages(phi, s_mat)
    it = 0
    while it < cap:
        g_max = float(lev.max())
        if g_max <= target:
            break
        it += 1
        best = int(np.argmax(lev))
        # Vertex exchange: move mass from the least-leveraged support atom to
        # the most-leveraged arm; falls back to a plain Wynn step when the
        # exchange is not profitable.  Exchange steps give the linear local
        # convergence a bare Wynn iteration lacks at tight tolerances.
        support = np.nonzero(p > 0.0)[0]
        worst = int(support[np.argmin(lev[support])])
        took_exchange = False
        if worst != best:
            g_b, g_w = lev[best], lev[worst]
            inv_b = np.linalg.solve(s_mat, phi[best])
            cross = float(phi[worst] @ inv_b)
            a_coef = cross * cross - g_b * g_w
            if a_coef < 0.0:
                lam = (g_b - g_w) / (-2.0 * a_coef)
                lam = min(lam, p[worst])
                if lam > 0.0:
                    p[best] += lam
                    p[worst] -= lam
                    s_mat += lam * (np.outer(phi[best], phi[best]) - np.outer(phi[worst], phi[worst]))
                    took_exchange = True
        if not took_exchange:
            g_b = lev[best]
            lam = (g_b / d - 1.0) / (g_b - 1.0)
            lam = min(max(lam, 0.0), 1.0 - 1e-12)
            p *= 1.0 - lam
            p[best] += lam
            s_mat = (1.0 - lam) * s_mat + lam * np.outer(phi[best], phi[best])
        lev = _leverages(phi, s_mat)
    else:
        raise NoConvergence(
            f"design loop hit the iteration cap {cap} with max leverage {lev.max():.6f}"
        )

    # Drop negligible support and renormalize; keep the pruned design only if
    # it still certifies.
    pruned = np.where(p < _PRUNE_TOL, 0.0, p)
    pruned /= pruned.sum()
    lev_pruned = _leverages(phi, phi.T @ (pruned[:, None] * phi))
    if float(lev_pruned.max()) <= target:
        p, lev = pruned, lev_pruned
    return DesignResult(SimplexDistribution(p), float(lev.max()), it)


def affine_rank(features: FeatureSet) -> int:
    """Dimension of the affine span of the arm features."""
    phi = features.features
    centered = phi - phi.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > max(phi.shape) * np.finfo(float).eps * sv[0]))


def centered_optimal_design(features: FeatureSet, tol: float = DESIGN_TOL) -> DesignResult:
    """Design maximizing log det of the centered covariance V(p).

    Runs the G-optimal solver on features lifted to (1, phi): the lifted
    information matrix satisfies det H'(p) = det V(p), and a lifted leverage
    bound of (d+1)(1+tol') translates to the centered certificate
    max_a ||phi_a - mu(p)||^2_{V(p)^{-1}} <= d (1 + tol) for tol' = tol*d/(d+1).

    Requires the affine span of the arm set to have full dimension d so that
    V(p) is invertible; raises AffinelyDegenerate otherwise.
    """
    phi = features.features
    k, d = phi.shape
    rank = affine_rank(features)
    if rank < d:
        raise AffinelyDegenerate(rank, d)
    lifted = FeatureSet(np.hstack([np.ones((k, 1)), phi]))
    lifted_tol = tol * d / (d + 1.0)
    base = g_optimal_design(lifted, lifted_tol)
    p = base.distribution
    op = covariance(p, features, "centered")
    centered = phi - op.mean
    norms = np.einsum("ij,ji->i", centered, np.linalg.solve(op.matrix, centered.T))
    return DesignResult(p, float(norms.max()), base.iterations)
