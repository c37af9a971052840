"""Robust kernel classification that learns which training samples to trust.

A Gaussian-process maximum-entropy-discrimination classifier carries one
binary nominality indicator per training sample.  The indicators are coupled
to a bipartite k-NN estimate of each class's minimal-entropy set, so samples
far from their class are down-weighted while the classifier is fitted.
"""

from .dataset import (
    LABELS,
    BipartiteSplit,
    DataError,
    Dataset,
    Sample,
    SyntheticConfig,
    bipartite_split,
    generate_synthetic,
    load_csv,
    save_csv,
)
from .dual import DualState
from .evaluate import (
    EvalReport,
    auc,
    baseline_med,
    baseline_two_stage,
    cv_gamma,
    decision_scores,
    misclassification,
    precision_recall,
    predict,
    predict_many,
)
from .gem import GemModel, detect, fit_gem, knn_distance, loo_detector, loo_threshold, me_set_select
from .kernel import GramMatrix, KernelError, KernelSpec, gram, kernel_eval, quadratic_form, sample_gp
from .posterior import PriorConfig, eta_logit, exact_posterior, gibbs_run
from .trainer import TrainConfig, TrainedModel, dual_gradients, load_model, psgd_step, save_model, train

__version__ = "0.1.0"

__all__ = [
    "LABELS",
    "BipartiteSplit",
    "DataError",
    "Dataset",
    "Sample",
    "SyntheticConfig",
    "bipartite_split",
    "generate_synthetic",
    "load_csv",
    "save_csv",
    "DualState",
    "EvalReport",
    "auc",
    "baseline_med",
    "baseline_two_stage",
    "cv_gamma",
    "decision_scores",
    "misclassification",
    "precision_recall",
    "predict",
    "predict_many",
    "GemModel",
    "detect",
    "fit_gem",
    "knn_distance",
    "loo_detector",
    "loo_threshold",
    "me_set_select",
    "GramMatrix",
    "KernelError",
    "KernelSpec",
    "gram",
    "kernel_eval",
    "quadratic_form",
    "sample_gp",
    "PriorConfig",
    "eta_logit",
    "exact_posterior",
    "gibbs_run",
    "TrainConfig",
    "TrainedModel",
    "dual_gradients",
    "load_model",
    "psgd_step",
    "save_model",
    "train",
]
