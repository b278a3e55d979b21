"""Heavy-tailed bandit algorithms, environments, and a regret harness.

The library implements bonus-shifted FTRL policies for losses with a bounded
eps-th raw moment (eps in (1, 2]): a best-of-both-worlds multi-armed bandit
policy, an adversarial linear-bandit policy, and a best-of-both-worlds linear
policy with a data-dependent learning rate, together with the optimal-design
exploration distributions, calibrated heavy-tailed environments, and a seeded
experiment harness that checks the algorithms' invariants at runtime.
"""

from .types import (
    FeatureSet,
    GapProfile,
    HeavyTailSpec,
    RoundRecord,
    SimplexDistribution,
    mix,
    normalize,
)
from .ftrl import (
    FtrlSolution,
    RegularizerSpec,
    solve_hybrid,
    solve_shannon,
    solve_tsallis,
    tsallis_entropy_value,
)
from .design import (
    CovarianceOperator,
    DesignResult,
    centered_optimal_design,
    covariance,
    g_optimal_design,
    solve_spd,
)
from .estimators import (
    EstimateBundle,
    check_unbiased_differences,
    linear_estimate,
    mab_estimate,
    variance_bound_check,
    vr_linear_estimate,
)
from .policies import (
    AdversarialLinearPolicy,
    BobwLinearPolicy,
    BobwMabPolicy,
    DerivedRoundParams,
    PolicyState,
    alg2_constants,
    alg3_round_params,
    default_alpha,
    htspm_update,
    mab_beta_schedule,
    mab_round_params,
)
from .environments import (
    AdaptiveAdversary,
    Environment,
    EnvironmentSpec,
    NoiseModel,
    calibrate_moment,
    moment_certificate,
)
from .config import ExperimentConfig, build_policy, load_config, parse_config
from .harness import (
    RegretCurve,
    hindsight_comparator,
    pseudo_regret_increment,
    run_custom,
    run_experiment,
    scaling_probe,
    trace_run,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveAdversary",
    "AdversarialLinearPolicy",
    "BobwLinearPolicy",
    "BobwMabPolicy",
    "CovarianceOperator",
    "DerivedRoundParams",
    "Environment",
    "EnvironmentSpec",
    "EstimateBundle",
    "ExperimentConfig",
    "FeatureSet",
    "FtrlSolution",
    "GapProfile",
    "HeavyTailSpec",
    "NoiseModel",
    "PolicyState",
    "RegretCurve",
    "RegularizerSpec",
    "RoundRecord",
    "SimplexDistribution",
    "alg2_constants",
    "alg3_round_params",
    "build_policy",
    "calibrate_moment",
    "centered_optimal_design",
    "check_unbiased_differences",
    "covariance",
    "default_alpha",
    "g_optimal_design",
    "hindsight_comparator",
    "htspm_update",
    "linear_estimate",
    "load_config",
    "mab_beta_schedule",
    "mab_estimate",
    "mab_round_params",
    "mix",
    "moment_certificate",
    "normalize",
    "parse_config",
    "pseudo_regret_increment",
    "run_custom",
    "run_experiment",
    "scaling_probe",
    "solve_hybrid",
    "solve_shannon",
    "solve_spd",
    "solve_tsallis",
    "trace_run",
    "tsallis_entropy_value",
    "variance_bound_check",
    "vr_linear_estimate",
]
