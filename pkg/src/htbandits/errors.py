"""Exception types shared across the library."""


class HtBanditsError(Exception):
    """Base class for all library errors."""


class NonFinite(HtBanditsError):
    """An input contains NaN or infinity."""


class AllZero(HtBanditsError):
    """A weight vector has no positive entry to normalize."""


class DimensionMismatch(HtBanditsError):
    """Two vector/matrix arguments disagree in dimension."""


class NoConvergence(HtBanditsError):
    """An iterative solve hit its iteration cap; signals pathological inputs."""


class RankDeficient(HtBanditsError):
    """Arm features do not span the ambient space."""


class AffinelyDegenerate(HtBanditsError):
    """Arm features lie in a lower-dimensional affine subspace."""

    def __init__(self, affine_rank: int, ambient_dim: int):
        self.affine_rank = affine_rank
        self.ambient_dim = ambient_dim
        super().__init__(
            f"affine span has dimension {affine_rank} < ambient dimension {ambient_dim}; "
            "re-parameterize the arm set before computing a centered design"
        )


class NearSingular(HtBanditsError):
    """A covariance operator is numerically singular (mixing failed to regularize)."""

    def __init__(self, message: str, condition_estimate: float | None = None):
        self.condition_estimate = condition_estimate
        if condition_estimate is not None:
            message = f"{message} (condition estimate {condition_estimate:.3e})"
        super().__init__(message)


class ZeroProbability(HtBanditsError):
    """The sampled arm carries (numerically) zero probability mass."""


class InvariantViolation(HtBanditsError):
    """A runtime invariant that should hold by construction was violated."""


class HorizonTooShort(HtBanditsError):
    """The requested horizon is too short for the required exploration rate."""


class ZeroEntropy(HtBanditsError):
    """The FTRL iterate collapsed onto a vertex, so the entropy estimate vanished."""


class Infeasible(HtBanditsError):
    """No noise scale can satisfy the moment certificate for the given mean."""


class NonUniqueOptimum(HtBanditsError):
    """Two arms tie for the best mean in a regime that requires a unique optimum."""


class MomentViolation(HtBanditsError):
    """An environment's certified moment bound exceeds the declared sigma."""


class ConfigError(HtBanditsError):
    """An experiment configuration failed validation."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class RunFailure(HtBanditsError):
    """At least one repetition of an experiment aborted."""
