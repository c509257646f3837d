"""Trial dataset container shared by the estimators, comparators and generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PositivityError


@dataclass(frozen=True)
class TrialDataset:
    """Observed data ``(W, A, Y)`` for a two-arm randomized trial.

    Parameters
    ----------
    covariates : ndarray, shape (n, d)
        Baseline covariates, used as main terms in the outcome regression.
    arm : ndarray, shape (n,)
        Treatment indicator in {0, 1}.
    outcomes : ndarray, shape (n, K)
        Endpoint outcomes, each oriented so that larger is better.
    propensity : float
        Known randomization probability ``P(A = 1 | W)``.
    """

    covariates: np.ndarray
    arm: np.ndarray
    outcomes: np.ndarray
    propensity: float = 0.5

    def __post_init__(self):
        w = np.asarray(self.covariates, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        a = np.asarray(self.arm)
        y = np.asarray(self.outcomes, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        n = a.shape[0]
        if w.shape[0] != n or y.shape[0] != n:
            raise ValueError(
                f"row counts disagree: covariates {w.shape[0]}, arm {n}, outcomes {y.shape[0]}"
            )
        if y.shape[1] < 2:
            raise ValueError(f"need at least 2 endpoints, got {y.shape[1]}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("arm must contain only 0/1 values")
        if not (np.isfinite(w).all() and np.isfinite(y).all()):
            raise ValueError("covariates and outcomes must be finite (no missing entries)")
        n1 = int(a.sum())
        if n1 < 2 or n - n1 < 2:
            raise ValueError(f"need at least 2 subjects per arm, got {n - n1} control / {n1} treated")
        g = float(self.propensity)
        if not 0.0 < g < 1.0:
            raise PositivityError(f"propensity must lie in (0, 1), got {g}")
        object.__setattr__(self, "covariates", w)
        object.__setattr__(self, "arm", a.astype(np.int8))
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "propensity", g)

    @property
    def n(self) -> int:
        return self.arm.shape[0]

    @property
    def n_endpoints(self) -> int:
        return self.outcomes.shape[1]

    def subset(self, index) -> "TrialDataset":
        """Rows selected by an integer index or boolean mask."""
        return TrialDataset(self.covariates[index], self.arm[index], self.outcomes[index], self.propensity)

    def with_outcomes(self, outcomes) -> "TrialDataset":
        return TrialDataset(self.covariates, self.arm, outcomes, self.propensity)
