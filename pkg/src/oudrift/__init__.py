"""Drift estimation for multidimensional Ornstein-Uhlenbeck processes.

Simulate ``dY = F Y dt + A dW`` exactly, estimate F by least squares
``F_hat = (int dY Y') (int Y Y' dt)^{-1}``, and check the estimator's
asymptotic behaviour empirically across stable, unstable, oscillatory and
nilpotent drifts.
"""

from .errors import (
    AmbiguousSpectrumError,
    ConfigError,
    DimensionError,
    DomainError,
    ExpOverflowError,
    KernelError,
    NonFiniteError,
    OUError,
    RankConditionError,
    SingularStatsError,
)
from .linalg import eigenvalues, lyapunov_stationary, matexp, noise_covariance, ordered_schur
from .model import (
    OUModel,
    SpectrumReport,
    car_model,
    check_condition_b,
    check_condition_b_prime,
    check_rank_condition,
    classify,
    log_likelihood,
    stationary_covariance,
)
from .splitting import SpectralSplit, check_subblock_rank, split_half_planes, split_left_block
from .simulate import SimConfig, SufficientStats, simulate_path, simulate_stats, transition_sample

__version__ = "0.1.0"
