"""Stabilized cross-validated TMLE global test.

Each fold learns composite weights on its training sample, shrinks them
toward the reference according to a training-fold p-value, and carries the
training-sample outcome regressions over to its validation sample. A single
fluctuation is then fitted on all validation samples together, and the fold
estimates are pooled into a t-calibrated one-sided test.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats

from .data import TrialDataset
from .errors import DegenerateInferenceError, EstimationError, FoldError
from .tmle import clever_covariate, estimate_all_endpoints, fluctuation_epsilon, small_sample_factor
from .weights import (
    StabilizationConfig,
    TrainingFoldSummary,
    check_simplex,
    optimize_weights,
    shrinkage_weight,
    stabilize,
    supremum_null_pvalue,
)

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class FoldPlan:
    """Fold label (0-based) of every subject."""

    assignment: np.ndarray

    @property
    def n_folds(self) -> int:
        return int(self.assignment.max()) + 1

    def validation(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def training(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_folds)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    index: np.ndarray
    summary: TrainingFoldSummary
    q_valid: np.ndarray  # (n_v, 2): composite Q(0, W), Q(1, W) from training coefficients
    composite_y: np.ndarray
    arm: np.ndarray


@dataclass(frozen=True)
class GlobalTestResult:
    psi_cv: float
    sigma_cv: float
    t_cv: float
    df: int
    critical_value: float
    reject: bool
    fold_weights: np.ndarray
    fold_pvalues: np.ndarray
    psi_folds: np.ndarray
    fold_adapt_weights: np.ndarray | None = None
    fold_t_star: np.ndarray | None = None

    @property
    def mean_weights(self) -> np.ndarray:
        return self.fold_weights.mean(axis=0)


def make_folds(n: int, v_folds: int, rng: np.random.Generator) -> FoldPlan:
    """Uniformly random partition into ``v_folds`` folds whose sizes differ by at most one."""
    if v_folds < 2:
        raise ValueError(f"need at least 2 folds, got {v_folds}")
    if n < 2 * v_folds:
        raise ValueError(f"n={n} too small for {v_folds} folds (need n >= {2 * v_folds})")
    assignment = np.empty(n, dtype=np.int64)
    assignment[rng.permutation(n)] = np.arange(n) % v_folds
    return FoldPlan(assignment)


def default_df(n: int, k: int = 2) -> int:
    """Logan-Tamhane degrees of freedom ``0.5 (n - 2) (1 + 1 / K^2)``, rounded down."""
    return int(math.floor(0.5 * (n - 2) * (1.0 + 1.0 / k**2)))


def _composite_predictions(models, alpha, covariates):
    q0 = sum(a * m.predict(covariates, 0) for a, m in zip(alpha, models))
    q1 = sum(a * m.predict(covariates, 1) for a, m in zip(alpha, models))
    return np.column_stack([q0, q1])


def learn_fold_weights(train: TrialDataset, cfg: StabilizationConfig, rng: np.random.Generator, n_total: int):
    """Training-sample half of a fold: estimates, adaptive weights, p-value, stabilized weights.

    The shrinkage uses ``ln(n_total)``, the full sample size.
    """
    est = estimate_all_endpoints(train)
    ref = cfg.reference(train.n_endpoints)
    alpha_adapt, unit_max = optimize_weights(est.psi, est.rho, alpha_ref=ref)
    t_star = math.sqrt(train.n) * unit_max
    if cfg.small_sample:
        t_star /= math.sqrt(small_sample_factor(train.n, est.n_params))
    p_value = supremum_null_pvalue(t_star, est.rho, cfg, rng)
    alpha_stab = stabilize(alpha_adapt, p_value, n_total, cfg)
    summary = TrainingFoldSummary(
        alpha_adapt=alpha_adapt,
        t_star=t_star,
        p_value=p_value,
        alpha_stab=alpha_stab,
        shrinkage=shrinkage_weight(p_value, n_total, cfg.c_constant),
    )
    return est, summary


def run_fold(
    data: TrialDataset,
    plan: FoldPlan,
    fold: int,
    cfg: StabilizationConfig,
    rng: np.random.Generator,
    fixed_weights=None,
) -> FoldResult:
    """Learn weights on the training folds and build validation-fold composites.

    With ``fixed_weights`` the weight learning is skipped and the given simplex
    point is used directly (the non-adaptive CV-TMLE).
    """
    train_idx, valid_idx = plan.training(fold), plan.validation(fold)
    if valid_idx.size == 0:
        raise FoldError(fold, EstimationError("empty validation fold"))
    try:
        train = data.subset(train_idx)
        if fixed_weights is None:
            est, summary = learn_fold_weights(train, cfg, rng, data.n)
        else:
            est = estimate_all_endpoints(train)
            w = check_simplex(fixed_weights, data.n_endpoints)
            summary = TrainingFoldSummary(w.copy(), float("nan"), 1.0, w.copy(), 1.0)
    except (EstimationError, ValueError) as exc:
        if isinstance(exc, FoldError):
            raise
        raise FoldError(fold, exc) from exc
    w_valid = data.covariates[valid_idx]
    alpha = summary.alpha_stab
    return FoldResult(
        fold=fold,
        index=valid_idx,
        summary=summary,
        q_valid=_composite_predictions(est.models, alpha, w_valid),
        composite_y=data.outcomes[valid_idx] @ alpha,
        arm=data.arm[valid_idx],
    )


def pooled_target(fold_results, data: TrialDataset, pooled: bool = True):
    """Fit the fluctuation on the validation samples and evaluate fold estimates.

    Returns
    -------
    epsilon : float or ndarray
        The shared fluctuation (pooled) or one per fold.
    psi_folds : ndarray, shape (V,)
        Validation-fold means of ``Q*(1, W) - Q*(0, W)``.
    ic_cv : ndarray, shape (n,)
        Composite influence curve of each subject from its validation fold,
        centered at that fold's estimate, in original subject order.
    """
    if len(fold_results) < 2:
        raise ValueError(f"need at least 2 folds, got {len(fold_results)}")
    g1 = data.propensity
    seen = np.zeros(data.n, dtype=int)
    for fr in fold_results:
        if fr.index.size == 0:
            raise EstimationError(f"fold {fr.fold} has an empty validation sample")
        seen[fr.index] += 1
    if (seen != 1).any():
        raise ValueError("every subject must appear in exactly one validation fold")

    def pieces(fr):
        h = clever_covariate(fr.arm, g1)
        q_obs = np.where(fr.arm == 1, fr.q_valid[:, 1], fr.q_valid[:, 0])
        return h, fr.composite_y - q_obs

    if pooled:
        hs, rs = zip(*(pieces(fr) for fr in fold_results))
        eps_all = fluctuation_epsilon(np.concatenate(hs), np.concatenate(rs))
        epsilons = [eps_all] * len(fold_results)
    else:
        epsilons = [fluctuation_epsilon(*pieces(fr)) for fr in fold_results]
        eps_all = np.array(epsilons)

    psi_folds = np.empty(len(fold_results))
    ic_cv = np.empty(data.n)
    for v, (fr, eps) in enumerate(zip(fold_results, epsilons)):
        h, resid = pieces(fr)
        q1s = fr.q_valid[:, 1] + eps / g1
        q0s = fr.q_valid[:, 0] - eps / (1.0 - g1)
        psi_folds[v] = np.mean(q1s - q0s)
        ic_cv[fr.index] = h * (resid - eps * h) + q1s - q0s - psi_folds[v]
    return eps_all, psi_folds, ic_cv


def pool_and_decide(psi_folds, ic_cv, gamma: float, df: int) -> GlobalTestResult:
    """Average fold estimates, estimate the CV variance, and apply the one-sided t test."""
    psi_folds = np.asarray(psi_folds, dtype=float)
    ic_cv = np.asarray(ic_cv, dtype=float)
    n = ic_cv.shape[0]
    psi_cv = float(psi_folds.mean())
    sigma = float(np.sqrt(np.mean((ic_cv - ic_cv.mean()) ** 2)))
    if sigma <= ZERO_TOL:
        if abs(psi_cv) > ZERO_TOL:
            raise DegenerateInferenceError(f"zero variance with estimate {psi_cv}")
        t_cv = 0.0
    else:
        t_cv = math.sqrt(n) * psi_cv / sigma
    crit = float(stats.t.ppf(1.0 - gamma, df))
    return GlobalTestResult(
        psi_cv=psi_cv,
        sigma_cv=sigma,
        t_cv=t_cv,
        df=int(df),
        critical_value=crit,
        reject=bool(t_cv > crit),
        fold_weights=np.empty((0, 0)),
        fold_pvalues=np.empty(0),
        psi_folds=psi_folds,
    )


def _cv_test(data, cfg, v_folds, gamma, rng, df, pooled, fixed_weights):
    fold_rng, mc_rng = rng.spawn(2)
    plan = make_folds(data.n, v_folds, fold_rng)
    mc_streams = mc_rng.spawn(v_folds)
    results = [
        run_fold(data, plan, v, cfg, mc_streams[v], fixed_weights=fixed_weights) for v in range(v_folds)
    ]
    _, psi_folds, ic_cv = pooled_target(results, data, pooled=pooled)
    decision = pool_and_decide(psi_folds, ic_cv, gamma, default_df(data.n, data.n_endpoints) if df is None else df)
    return GlobalTestResult(
        **{
            **decision.__dict__,
            "fold_weights": np.array([r.summary.alpha_stab for r in results]),
            "fold_pvalues": np.array([r.summary.p_value for r in results]),
            "fold_adapt_weights": np.array([r.summary.alpha_adapt for r in results]),
            "fold_t_star": np.array([r.summary.t_star for r in results]),
        }
    )


def stabilized_cvtmle_test(
    data: TrialDataset,
    cfg: StabilizationConfig | None = None,
    v_folds: int = 10,
    gamma: float = 0.025,
    rng: np.random.Generator | None = None,
    df: int | None = None,
    pooled: bool = True,
) -> GlobalTestResult:
    """Run the full stabilized CV-TMLE global null test.

    ``rng`` is split into a fold-assignment stream and one Monte Carlo stream
    per fold, so the same generator state always reproduces the same result.
    ``df`` defaults to the Logan-Tamhane value from :func:`default_df`.
    """
    cfg = StabilizationConfig() if cfg is None else cfg
    rng = np.random.default_rng() if rng is None else rng
    return _cv_test(data, cfg, v_folds, gamma, rng, df, pooled, None)


def fixed_weight_cvtmle_test(
    data: TrialDataset,
    alpha,
    v_folds: int = 10,
    gamma: float = 0.025,
    rng: np.random.Generator | None = None,
    df: int | None = None,
    pooled: bool = True,
) -> GlobalTestResult:
    """CV-TMLE test of a prespecified composite, sharing the fold draw of the stabilized test."""
    rng = np.random.default_rng() if rng is None else rng
    return _cv_test(data, StabilizationConfig(), v_folds, gamma, rng, df, pooled, alpha)
