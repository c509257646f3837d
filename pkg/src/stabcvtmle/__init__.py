"""Stabilized cross-validated TMLE global test for multiple endpoints."""

from .comparators import (
    ComparatorResult,
    endpoint_pvalues,
    hochberg,
    holm,
    obrien_ols_tmle,
    obrien_ranksum,
)
from .cv import (
    FoldPlan,
    FoldResult,
    GlobalTestResult,
    fixed_weight_cvtmle_test,
    make_folds,
    pool_and_decide,
    pooled_target,
    run_fold,
    stabilized_cvtmle_test,
)
from .data import TrialDataset
from .dgp import GeneratedTrial, Study1Config, Study2Config, gen_study1, gen_study2
from .tmle import (
    EndpointEstimates,
    OutcomeModel,
    clever_covariate,
    composite_ic,
    estimate_all_endpoints,
    fit_outcome_regression,
    tmle_ate,
)
from .weights import (
    StabilizationConfig,
    TrainingFoldSummary,
    optimize_weights,
    snr,
    stabilize,
    supremum_null_pvalue,
)

__version__ = "0.1.0"
