"""Recursive estimation of element fractions in steel scrap types from heat records."""

__version__ = "0.1.0"

from .baseline import WindowConfig, nnls_solve, ols_init, windowed_nnls
from .estimators import KalmanScrapEstimator, UnscentedScrapEstimator, WindowedNNLSEstimator
from .evalkit import ErrorSummary, evaluate, export_report, misspecification_sweep, prediction_errors, summarize
from .exceptions import (
    DecompositionError,
    DomainError,
    GenerationError,
    HeatsParseError,
    MomentMatchingError,
    NumericalFailure,
    ScrapKFError,
    SolverError,
)
from .filters import FilterTrace, kalman_step, predict_steel_fraction, run_filter, sigma_points, ukf_step
from .io import RunConfig, load_heats, save_heats
from .model import (
    ElementSpec,
    GaussianBelief,
    HeatRecord,
    Heats,
    NoiseSpec,
    PartitionModel,
    ScrapCatalog,
    beta_params_from_moments,
    gamma_from_half_life,
    process_noise_from_stationary,
    propagate_moments,
    stationary_covariance,
)
from .synthgen import SyntheticDataset, make_dataset

__all__ = [
    "DecompositionError", "DomainError", "ElementSpec", "ErrorSummary", "FilterTrace", "GaussianBelief",
    "GenerationError", "HeatRecord", "Heats", "HeatsParseError", "KalmanScrapEstimator", "MomentMatchingError",
    "NoiseSpec", "NumericalFailure", "PartitionModel", "RunConfig", "ScrapCatalog", "ScrapKFError",
    "SolverError", "SyntheticDataset", "UnscentedScrapEstimator", "WindowConfig", "WindowedNNLSEstimator",
    "beta_params_from_moments", "evaluate", "export_report", "gamma_from_half_life", "kalman_step",
    "load_heats", "make_dataset", "misspecification_sweep", "nnls_solve", "ols_init", "predict_steel_fraction",
    "prediction_errors", "process_noise_from_stationary", "propagate_moments", "run_filter", "save_heats",
    "sigma_points", "stationary_covariance", "summarize", "ukf_step", "windowed_nnls",
]
