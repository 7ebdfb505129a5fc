"""EM variable selection for binary responses under a spike-and-slab prior."""
from .datagen import (
    DesignSpec,
    ResponseSpec,
    SpecInvalid,
    correlation_scale,
    generate_binary_response,
    generate_design,
    generate_replicate_betas,
    max_cross_correlation,
)
from .estep import e_step, expected_precision, inclusion_probability, theta_update
from .harness import (
    Nu0Grid,
    PathResult,
    SelectionMetrics,
    StudyConfig,
    derive_seed,
    replica_dataset,
    run_path,
    run_ssvs_comparison,
    run_study,
    selection_metrics,
)
from .logistic import LogisticEmConfig, PenaltyMode, fit_logistic, predict_logistic
from .probit import BetaSolver, ProbitEmConfig, SingularSystem, fit_probit, impute_latent, predict_probit
from .sdca import Loss, PenalizedProblem, SolverConfig, SolverOutput, solve
from .ssvs import ActiveSetOverflow, SsvsConfig, SsvsResult, run_ssvs_probit
from .types import (
    Coding,
    ConstantColumn,
    Dataset,
    DimensionMismatch,
    EmState,
    EmvsError,
    FitResult,
    LabelCodingMismatch,
    NonFinite,
    SpikeSlabHyper,
    make_dataset,
    recode,
    standardize,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
