"""Food-security probability estimation from long household panels."""

__version__ = "0.1.0"

from .config import PipelineConfig, config_from_dict, load_config
from .dynamics import (
    chronic_classification,
    chronic_prevalence,
    find_spells,
    newly_still,
    spell_distribution,
    transition_matrix,
    transition_rates,
)
from .dynasty import build_dynasty
from .errors import (
    ConfigError,
    DataError,
    DependencyError,
    DomainError,
    HarmonizationError,
    IntegrityError,
    JoinError,
    NumericError,
    PipelineError,
    RangeError,
    SchemaError,
    UsageError,
    ValidationFailure,
)
from .estimator import (
    GammaParams,
    MomentEstimates,
    compute_pfs,
    estimate_moments,
    gamma_from_moments,
    gamma_survival,
    survival_from_moments,
)
from .glm import (
    Covariate,
    DesignSpec,
    FittedModel,
    build_design,
    fit_ols,
    fit_poisson_qmle,
    predict,
    within_transform,
)
from .ingest import CpiTable, harmonize_table, parse_panel_csv
from .pipeline import run
from .synth import (
    DGPConfig,
    acceptance_config,
    demo_config,
    generate,
    oracle_dynamics_enum,
    oracle_qmle_search,
    oracle_survival_mc,
    true_coefficient_table,
)
from .thresholds import (
    CalibrationResult,
    ThresholdModel,
    achieved_prevalence,
    calibrate_cutoff,
    calibrate_panel,
    fit_threshold_model,
    predict_cutoffs,
)
from .waves import WaveCalendar, default_calendar, unit_calendar

__all__ = [
    "__version__",
    "CalibrationResult",
    "ConfigError",
    "Covariate",
    "CpiTable",
    "DGPConfig",
    "DataError",
    "DependencyError",
    "DesignSpec",
    "DomainError",
    "FittedModel",
    "GammaParams",
    "HarmonizationError",
    "IntegrityError",
    "JoinError",
    "MomentEstimates",
    "NumericError",
    "PipelineConfig",
    "PipelineError",
    "RangeError",
    "SchemaError",
    "ThresholdModel",
    "UsageError",
    "ValidationFailure",
    "WaveCalendar",
    "acceptance_config",
    "achieved_prevalence",
    "build_design",
    "build_dynasty",
    "calibrate_cutoff",
    "calibrate_panel",
    "chronic_classification",
    "chronic_prevalence",
    "compute_pfs",
    "config_from_dict",
    "default_calendar",
    "demo_config",
    "estimate_moments",
    "find_spells",
    "fit_ols",
    "fit_poisson_qmle",
    "fit_threshold_model",
    "gamma_from_moments",
    "gamma_survival",
    "generate",
    "harmonize_table",
    "load_config",
    "newly_still",
    "oracle_dynamics_enum",
    "oracle_qmle_search",
    "oracle_survival_mc",
    "parse_panel_csv",
    "predict",
    "predict_cutoffs",
    "run",
    "spell_distribution",
    "survival_from_moments",
    "transition_matrix",
    "transition_rates",
    "true_coefficient_table",
    "unit_calendar",
    "within_transform",
]
