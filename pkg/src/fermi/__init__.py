"""Fair classification with an exponential Renyi mutual information penalty.

The package trains linear-softmax classifiers under a dependence penalty
between predictions and a sensitive attribute, using stochastic gradient
descent-ascent on an exact variational form of the penalty, and ships the
divergence toolkit (chi-squared dependence, Shannon/Renyi mutual
information, correlation and violation metrics) whose inter-measure bounds
double as the package's verification suite.
"""

from . import kernels
from .data import (
    MASKED,
    LabeledDataset,
    SynthConfig,
    load_csv,
    mask_sensitive,
    save_csv,
    split,
    synthesize_biased,
)
from .divergences import (
    CorrelationKernel,
    DivergenceReport,
    correlation_kernel,
    divergence_report,
    dp_conditional_linf,
    eo_conditional_linf,
    ermi,
    ermi_conditional,
    lq_violation,
    pearson,
    renyi_correlation,
    renyi_mi_2,
    shannon_mi,
)
from .errors import DegenerateMarginalError, ValidationError
from .evaluate import (
    FairnessReport,
    SweepResult,
    SweepRow,
    evaluate,
    hard_predictions,
    majority_label,
    naive_baseline_curve,
    sweep,
)
from .model import (
    LinearSoftmaxModel,
    ce_loss_and_grad,
    finite_diff_check,
    from_param_vector,
    jacobian,
    load_model,
    model_from_dict,
    model_to_dict,
    predict_proba,
    save_model,
    to_param_vector,
)
from .solver import (
    AuditResult,
    CriticBlock,
    FairnessNotion,
    SolverConfig,
    TrainTrace,
    conditioning_blocks,
    critic_optimum,
    demographic_parity,
    equal_opportunity,
    equalized_odds,
    phi_grad_norm,
    project_frobenius,
    sgda_train,
    surrogate_grad_critic,
    surrogate_grad_params,
    surrogate_value,
    unbiasedness_audit,
    variational_value,
)
from .tables import (
    ConditionalTables,
    JointTable,
    Marginals,
    conditional_joints,
    empirical_joint,
    marginals,
    positive_marginals,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "kernels",
    # data
    "MASKED",
    "LabeledDataset",
    "SynthConfig",
    "load_csv",
    "mask_sensitive",
    "save_csv",
    "split",
    "synthesize_biased",
    # divergences
    "CorrelationKernel",
    "DivergenceReport",
    "correlation_kernel",
    "divergence_report",
    "dp_conditional_linf",
    "eo_conditional_linf",
    "ermi",
    "ermi_conditional",
    "lq_violation",
    "pearson",
    "renyi_correlation",
    "renyi_mi_2",
    "shannon_mi",
    # errors
    "DegenerateMarginalError",
    "ValidationError",
    # evaluate
    "FairnessReport",
    "SweepResult",
    "SweepRow",
    "evaluate",
    "hard_predictions",
    "majority_label",
    "naive_baseline_curve",
    "sweep",
    # model
    "LinearSoftmaxModel",
    "ce_loss_and_grad",
    "finite_diff_check",
    "from_param_vector",
    "jacobian",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predict_proba",
    "save_model",
    "to_param_vector",
    # solver
    "AuditResult",
    "CriticBlock",
    "FairnessNotion",
    "SolverConfig",
    "TrainTrace",
    "conditioning_blocks",
    "critic_optimum",
    "demographic_parity",
    "equal_opportunity",
    "equalized_odds",
    "phi_grad_norm",
    "project_frobenius",
    "sgda_train",
    "surrogate_grad_critic",
    "surrogate_grad_params",
    "surrogate_value",
    "unbiasedness_audit",
    "variational_value",
    # tables
    "ConditionalTables",
    "JointTable",
    "Marginals",
    "conditional_joints",
    "empirical_joint",
    "marginals",
    "positive_marginals",
    "validate",
]
