"""Adaptive debiased machine learning estimators of the average treatment effect.

The package fits Lasso-selected hinge-basis working models for the
propensity, outcome, and CATE, then debiases the corresponding plug-in
functionals with empirically solved Riesz representers.  It ships the two
adaptive estimators, two baselines (AIPW and the constant-effect
partially linear estimator), population oracles for bias diagnostics, and a
seeded Monte Carlo harness behind the ``adml`` command line tool.
"""

from .basis import BasisSpec, DesignMatrix, build_additive_basis, expand, hinge_eval
from .config import ExperimentConfig, load_config, loads_config
from .data import Dataset, read_dataset_csv, write_dataset_csv
from .errors import ConfigError, DegenerateDesignError, EstimationError
from .estimator import AteEstimator
from .estimators import (
    AIPW,
    ESTIMATORS,
    INTERCEPT,
    PARTIALLY_LINEAR,
    PLUG_IN,
    AteEstimate,
    RieszFit,
    aipw,
    confidence_interval,
    empirical_riesz,
    normal_quantile,
    overlap_riesz,
    partially_linear_admle,
    plug_in_admle,
    semiparametric_intercept,
)
from .nuisance import (
    FitOptions,
    NuisanceBundle,
    compute_m,
    fit_nuisances,
    riesz_truncation_loss,
    schedule_knots,
    select_truncation,
)
from .projections import (
    McEstimate,
    PopulationOracle,
    oracle_bias_partially_linear,
    oracle_bias_plug_in,
    plug_in_estimand,
    population_overlap_riesz,
    population_projection_cate,
    true_ate,
    uniform_knots,
    working_estimand,
)
from .simulation import (
    DgpSpec,
    MetricsRow,
    MetricsTable,
    ReplicationRecord,
    apply_local_perturbation,
    overlap_constant,
    read_metrics_csv,
    replicate,
    run_replications,
    sample_dgp,
    summarize,
)

__version__ = "0.1.0"

__all__ = [
    "AIPW",
    "ESTIMATORS",
    "INTERCEPT",
    "PARTIALLY_LINEAR",
    "PLUG_IN",
    "AteEstimate",
    "AteEstimator",
    "BasisSpec",
    "ConfigError",
    "Dataset",
    "DegenerateDesignError",
    "DesignMatrix",
    "DgpSpec",
    "EstimationError",
    "ExperimentConfig",
    "FitOptions",
    "McEstimate",
    "MetricsRow",
    "MetricsTable",
    "NuisanceBundle",
    "PopulationOracle",
    "ReplicationRecord",
    "RieszFit",
    "aipw",
    "apply_local_perturbation",
    "build_additive_basis",
    "compute_m",
    "confidence_interval",
    "empirical_riesz",
    "expand",
    "fit_nuisances",
    "hinge_eval",
    "load_config",
    "loads_config",
    "normal_quantile",
    "oracle_bias_partially_linear",
    "oracle_bias_plug_in",
    "overlap_constant",
    "overlap_riesz",
    "partially_linear_admle",
    "plug_in_admle",
    "plug_in_estimand",
    "population_overlap_riesz",
    "population_projection_cate",
    "read_dataset_csv",
    "read_metrics_csv",
    "replicate",
    "riesz_truncation_loss",
    "run_replications",
    "sample_dgp",
    "schedule_knots",
    "select_truncation",
    "semiparametric_intercept",
    "summarize",
    "true_ate",
    "uniform_knots",
    "working_estimand",
    "write_dataset_csv",
]
