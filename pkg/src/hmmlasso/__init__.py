"""L1-regularized Markov-switching logistic regression for binary series."""

__version__ = "0.1.0"

from .model import (
    ModelError,
    ModelSpec,
    Params,
    Sequence,
    SequenceSet,
    emission_probs,
    inv_logit,
    linear_predictor,
    sequence_loglik,
    stationary_distribution,
    total_loglik,
)
from .penalty import (
    MODES,
    PenaltyConfig,
    l1_smooth,
    l1_smooth_grad,
    penalized_loglik,
    penalty_term,
)
from .fit import FitConfig, FitError, FitResult, WorkingObjective, fit, relaxed_refit
from .selection import (
    SCHEMES,
    LambdaGrid,
    PathPoint,
    PathResult,
    Selection,
    SelectionError,
    fit_path,
    information_criteria,
    make_grid,
    select,
)
from .inference import (
    ForecastRecord,
    StateDecoding,
    avg_pred_prob,
    brier_score,
    decode,
    filtered_last,
    forecast,
    forecast_from,
    make_records,
)
from .simulation import (
    ScenarioConfig,
    StudyConfig,
    StudyResult,
    generate,
    generate_panel,
    mse,
    run_one,
    run_study,
    tpr_fpr,
    write_median_table,
    write_study_table,
)
from .data import (
    DataError,
    DesignBuilder,
    FilterReport,
    PenaltyRecord,
    build_design,
    descriptives,
    filter_min_attempts,
    load_csv,
    write_catalog,
    write_csv,
    write_descriptives,
)
