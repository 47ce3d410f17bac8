"""mixopt: data-mixture optimization over the fixed mixing lattice.

Learn a neural surrogate (mixture proportions, training step) -> task
scores from a small set of observed runs, extrapolate it exhaustively
over the enumerable mixing lattice to rank mixtures, and calibrate
predictions across models. A deterministic synthetic dynamics oracle
makes the whole pipeline verifiable end to end.
"""

from .calibrate import (
    AffineCalibrator,
    CalibrationMap,
    CorrelationReport,
    apply_calibration,
    correlation_report,
    fit_calibration,
    identity_map,
    load_calibration,
    pearson,
    save_calibration,
)
from .config import RunConfig, load_run_config
from .errors import BudgetError, DomainError, SchemaError, TrainingError
from .lattice import (
    DatasetCatalog,
    LatticePoint,
    composition_block,
    enumerate_lattice,
    lattice_rank,
    lattice_size,
    load_catalog,
    natural_mixture,
    sample_lattice,
    to_proportions,
    uniform_mixture,
    unrank_lattice,
)
from .lawfit import (
    ExpLawParams,
    ExponentialLawModel,
    exp_law_best_mixture,
    fit_all_tasks,
    fit_exp_law,
    fit_exp_law_xy,
    predict_exp_law,
)
from .metrics import PlanGraph, dag_complexity, diversity, overall_average, rouge_l, tokenize
from .optimize import (
    RankedMixture,
    RankingResult,
    checkpoint_grid,
    optimal_mixture,
    predict_objective,
    rank_lattice,
)
from .records import (
    SamplePoint,
    design_matrix,
    make_sample,
    read_plan,
    read_samples,
    write_plan,
    write_samples,
)
from .simdyn import (
    OracleSpec,
    brute_force_best,
    derive_affine_target,
    load_oracle,
    make_oracle,
    oracle_eval,
    oracle_eval_batch,
    oracle_objective,
    save_oracle,
)
from .surrogate import (
    CVResult,
    FlatNetwork,
    MlpSurrogate,
    TrainConfig,
    cross_validate,
    fit_surrogate,
    forward,
    forward_single,
    init_network,
    load_surrogate,
    loss_and_grad,
    mse_loss,
    param_count,
    r_squared,
    save_surrogate,
    train_network,
)

__version__ = "0.1.0"
