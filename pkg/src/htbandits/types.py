"""Shared domain vocabulary: arm distributions, tail parameters, features, traces.

All types here are immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllZero,
    DimensionMismatch,
    NonFinite,
    RankDeficient,
)

# Validation tolerance on incoming weights; post-normalization sums are exact
# to SUM_TOL.  Doubles over K <= 1e4 arms stay well inside both.
SIMPLEX_VALIDATION_TOL = 1e-9
SIMPLEX_SUM_TOL = 1e-12
# Entries below this underflow q**(alpha-1) downstream; clamp to zero.
TINY_WEIGHT = 1e-300


@dataclass(frozen=True)
class HeavyTailSpec:
    """Known (epsilon, sigma) moment parameters: E|loss|^epsilon <= sigma.

    epsilon must lie in (1, 2] and sigma must be positive.
    """

    epsilon: float
    sigma: float

    def __post_init__(self):
        if not (1.0 < self.epsilon <= 2.0):
            raise ValueError(f"epsilon must lie in (1, 2], got {self.epsilon}")
        if not (self.sigma > 0.0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")


class SimplexDistribution:
    """A probability vector over K arms.

    Construction validates nonnegativity and that the entries already sum to 1
    within ``SIMPLEX_VALIDATION_TOL``, then renormalizes so the sum is 1 within
    ``SIMPLEX_SUM_TOL``.  Entries below ``TINY_WEIGHT`` are clamped to zero
    before renormalization.
    """

    __slots__ = ("_w",)

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d vector")
        if not np.all(np.isfinite(w)):
            raise NonFinite("simplex weights contain NaN or infinity")
        if np.any(w < 0.0):
            raise ValueError("simplex weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > SIMPLEX_VALIDATION_TOL:
            raise ValueError(
                f"weights sum to {total!r}, not 1 within {SIMPLEX_VALIDATION_TOL}"
            )
        w = np.where(w < TINY_WEIGHT, 0.0, w)
        w = w / w.sum()
        w.flags.writeable = False
        self._w = w

    @classmethod
    def _trusted(cls, weights: np.ndarray) -> "SimplexDistribution":
        """Wrap weights already known to satisfy the invariants (hot paths)."""
        self = object.__new__(cls)
        weights.flags.writeable = False
        self._w = weights
        return self

    @property
    def weights(self) -> np.ndarray:
        return self._w

    @property
    def n_arms(self) -> int:
        return self._w.size

    def __len__(self) -> int:
        return self._w.size

    def __getitem__(self, idx):
        return self._w[idx]

    def __repr__(self) -> str:
        return f"SimplexDistribution({self._w.tolist()})"

    @classmethod
    def uniform(cls, n_arms: int) -> "SimplexDistribution":
        return cls(np.full(n_arms, 1.0 / n_arms))

    @classmethod
    def dirac(cls, n_arms: int, arm: int) -> "SimplexDistribution":
        w = np.zeros(n_arms)
        w[arm] = 1.0
        return cls(w)


def normalize(weights) -> SimplexDistribution:
    """Rescale a nonnegative vector to a probability distribution.

    Raises AllZero when every entry is zero and NonFinite on NaN/infinity.
    The result is proportional to the input with sum 1 within 1e-12.
    """
    w = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(w)):
        raise NonFinite("cannot normalize a vector with NaN or infinity")
    if np.any(w < 0.0):
        raise ValueError("cannot normalize a vector with negative entries")
    total = w.sum()
    if total <= 0.0:
        raise AllZero("cannot normalize the all-zero vector")
    return SimplexDistribution(w / total)


def mix(q: SimplexDistribution, p0: SimplexDistribution, gamma: float) -> SimplexDistribution:
    """Exploration mixture (1 - gamma) * q + gamma * p0."""
    if len(q) != len(p0):
        raise DimensionMismatch(f"cannot mix distributions of size {len(q)} and {len(p0)}")
    if not (0.0 <= gamma <= 1.0):
        raise ValueError(f"mixing weight must lie in [0, 1], got {gamma}")
    return SimplexDistribution((1.0 - gamma) * q.weights + gamma * p0.weights)


class FeatureSet:
    """The d-dimensional feature vectors of a finite, fixed arm set.

    Requires K >= 2 arms whose linear span has full rank d.  Rank is decided by
    SVD with cutoff d * machine_eps * (largest singular value).  The affine
    rank needed by centered designs is checked separately in the design module.
    """

    __slots__ = ("_phi",)

    def __init__(self, features):
        phi = np.asarray(features, dtype=float)
        if phi.ndim != 2:
            raise ValueError("features must be a (K, d) matrix, one row per arm")
        if not np.all(np.isfinite(phi)):
            raise NonFinite("features contain NaN or infinity")
        k, d = phi.shape
        if k < 2:
            raise ValueError(f"need at least 2 arms, got {k}")
        if d < 1:
            raise ValueError("ambient dimension must be at least 1")
        sv = np.linalg.svd(phi, compute_uv=False)
        rank = int(np.sum(sv > d * np.finfo(float).eps * sv[0])) if sv[0] > 0 else 0
        if rank < d:
            raise RankDeficient(
                f"features span a subspace of rank {rank} < ambient dimension {d}"
            )
        phi = phi.copy()
        phi.flags.writeable = False
        self._phi = phi

    @property
    def features(self) -> np.ndarray:
        return self._phi

    @property
    def n_arms(self) -> int:
        return self._phi.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self._phi.shape[1]

    def __repr__(self) -> str:
        return f"FeatureSet(K={self.n_arms}, d={self.ambient_dim})"

    @classmethod
    def from_csv(cls, path, header: bool = False) -> "FeatureSet":
        """Load one arm per row, d comma-separated reals; header row optional."""
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            for i, row in enumerate(reader):
                if i == 0 and header:
                    continue
                if not row:
                    continue
                rows.append([float(x) for x in row])
        if not rows:
            raise ValueError(f"no feature rows found in {path}")
        return cls(np.asarray(rows))


@dataclass(frozen=True, slots=True)
class GapProfile:
    """Suboptimality gaps, the optimal arm, and the corruption budget C."""

    gaps: np.ndarray
    optimal_arm: int
    corruption_budget: float = 0.0

    def __post_init__(self):
        gaps = np.asarray(self.gaps, dtype=float)
        gaps.flags.writeable = False
        object.__setattr__(self, "gaps", gaps)
        if not (0 <= self.optimal_arm < gaps.size):
            raise ValueError("optimal_arm out of range")
        if gaps[self.optimal_arm] != 0.0:
            raise ValueError("the optimal arm must have zero gap")
        if np.any(gaps < 0.0):
            raise ValueError("gaps must be nonnegative")
        others = np.delete(gaps, self.optimal_arm)
        if others.size and np.any(others == 0.0):
            raise ValueError("every suboptimal arm must have a strictly positive gap")
        if self.corruption_budget < 0.0:
            raise ValueError("corruption budget must be nonnegative")

    @property
    def min_gap(self) -> float:
        others = np.delete(self.gaps, self.optimal_arm)
        return float(others.min()) if others.size else 0.0


@dataclass(frozen=True, slots=True)
class RoundRecord:
    """Per-round trace of a policy: the full state needed for replay checks.

    ``z``, ``w`` and ``entropy`` are populated only by the learning-rate-
    adaptive linear policy, whose update rule is recomputed from them post hoc.
    """

    t: int
    q: SimplexDistribution
    p: SimplexDistribution
    chosen_arm: int
    observed_loss: float
    clipped_estimate: np.ndarray
    bonus: np.ndarray
    gamma: float
    clip_thresholds: np.ndarray
    beta: float
    invariant_flags: dict = field(default_factory=dict)
    z: float | None = None
    w: float | None = None
    entropy: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 0.5 + 1e-12):
            raise ValueError(f"gamma must lie in [0, 1/2], got {self.gamma}")
        if not np.all(np.asarray(self.clip_thresholds) > 0.0):
            raise ValueError("clip thresholds must be positive")
