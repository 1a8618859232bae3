"""Robust halfspace learning under lp perturbations with agnostic label noise."""

from .geometry import (
    AttackSpec,
    DegenerateModelError,
    UnsupportedCaseError,
    dual_map,
    holder_conjugate,
    lp_norm,
    optimal_perturbation,
    perturbation_direction,
    project_lq_sphere,
    robust_margin,
)
from .losses import LossConstants, LossSpec, loss_constants, loss_derivative, loss_inverse, loss_value
from .synthdata import (
    Dataset,
    DatasetFormatError,
    DatasetSampler,
    GenerationTimeoutError,
    GeneratorSampler,
    GeneratorSpec,
    NoiseSpec,
    NormBound,
    ball_covariance_scale,
    empirical_soft_margin,
    generate,
    load_dataset,
    save_dataset,
)
from .trainers import (
    Snapshot,
    SnapshotMetrics,
    TrainConfig,
    TrainTrace,
    annotate_trace_metrics,
    evaluate_snapshot_policy,
    psat_gradient,
    snapshot_robust_errors,
    train_gd,
    train_psat,
    train_sgd,
)
from .evaluation import (
    AngleReport,
    EvalReport,
    OracleResult,
    SandwichBounds,
    angle_and_sine,
    evaluate,
    opt_sandwich,
    oracle_opt,
    robust_error,
    robust_margins,
    robust_surrogate_loss,
)

__version__ = "0.1.0"
