"""Endpoint-specific TMLE of the average treatment effect with a known propensity.

The initial outcome regression is ordinary least squares on ``[1, W, A]``.
Targeting is a single linear fluctuation along the clever covariate
``H(A) = (2A - 1) / g(A)``, which solves the efficient influence curve
equation exactly for continuous outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrialDataset
from .errors import PositivityError, SingularFitError


@dataclass(frozen=True)
class OutcomeModel:
    """Main-terms linear regression ``Q(A, W) = b0 + W @ bw + bA * A``."""

    coefficients: np.ndarray

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def treatment_effect(self) -> float:
        return float(self.coefficients[-1])

    def predict(self, covariates: np.ndarray, arm) -> np.ndarray:
        w = np.atleast_2d(np.asarray(covariates, dtype=float))
        a = np.broadcast_to(np.asarray(arm, dtype=float), (w.shape[0],))
        c = self.coefficients
        return c[0] + w @ c[1:-1] + c[-1] * a


@dataclass(frozen=True)
class EndpointEstimates:
    """Targeted estimates for all K endpoints on one sample.

    ``ic`` holds the estimated influence-curve value of every subject for
    every endpoint; ``rho`` is its empirical covariance with divisor n.
    ``models`` are the initial (untargeted) outcome regressions and
    ``n_params`` the number of regression coefficients per endpoint.
    """

    psi: np.ndarray
    ic: np.ndarray
    rho: np.ndarray
    models: tuple[OutcomeModel, ...] = ()
    n_params: int = 0

    @property
    def n(self) -> int:
        return self.ic.shape[0]

    def inference_rho(self, small_sample: bool = True) -> np.ndarray:
        """``rho`` times ``n / (n - n_params)`` (HC1) when ``small_sample`` is set."""
        if not small_sample:
            return self.rho
        return self.rho * small_sample_factor(self.n, self.n_params)


def small_sample_factor(n: int, n_params: int) -> float:
    """Degrees-of-freedom inflation ``n / (n - p)`` for an in-sample sandwich variance."""
    if n_params <= 0:
        return 1.0
    if n <= n_params:
        raise ValueError(f"n={n} does not exceed the {n_params} fitted parameters")
    return n / (n - n_params)


def _design(data: TrialDataset) -> np.ndarray:
    return np.column_stack([np.ones(data.n), data.covariates, data.arm.astype(float)])


def fit_outcome_regression(data: TrialDataset, endpoint: int) -> OutcomeModel:
    """Least-squares fit of endpoint ``endpoint`` on intercept, covariates and arm."""
    x = _design(data)
    rank = np.linalg.matrix_rank(x)
    if rank < x.shape[1]:
        raise SingularFitError(
            f"design [1, W, A] has rank {rank} < {x.shape[1]} columns for endpoint {endpoint}",
            endpoint=endpoint,
        )
    coef, *_ = np.linalg.lstsq(x, data.outcomes[:, endpoint], rcond=None)
    return OutcomeModel(coef)


def clever_covariate(a, g1: float):
    """``(2a - 1) / g(a)`` with ``g(1) = g1`` and ``g(0) = 1 - g1``.

    Accepts a scalar or an array of treatment indicators.
    """
    g1 = float(g1)
    if not 0.0 < g1 < 1.0:
        raise PositivityError(f"treatment probability must lie in (0, 1), got {g1}")
    a = np.asarray(a)
    out = np.where(a == 1, 1.0 / g1, -1.0 / (1.0 - g1))
    return float(out) if out.ndim == 0 else out


def fluctuation_epsilon(h: np.ndarray, residual: np.ndarray) -> float:
    """No-intercept least-squares slope of ``residual`` on ``h``."""
    denom = float(h @ h)
    return float(h @ residual) / denom


def target(y, q_obs, q1, q0, a, g1):
    """Apply one linear fluctuation and return ``(epsilon, q1*, q0*, q_obs*)``."""
    h = clever_covariate(a, g1)
    eps = fluctuation_epsilon(h, y - q_obs)
    q1s = q1 + eps / g1
    q0s = q0 - eps / (1.0 - g1)
    return eps, q1s, q0s, q_obs + eps * h


def _targeted(data: TrialDataset, model: OutcomeModel, endpoint: int):
    y = data.outcomes[:, endpoint]
    w, a, g1 = data.covariates, data.arm, data.propensity
    q1 = model.predict(w, 1)
    q0 = model.predict(w, 0)
    q_obs = np.where(a == 1, q1, q0)
    _, q1s, q0s, q_obs_s = target(y, q_obs, q1, q0, a, g1)
    psi = float(np.mean(q1s - q0s))
    ic = clever_covariate(a, g1) * (y - q_obs_s) + q1s - q0s - psi
    return psi, ic


def tmle_ate(data: TrialDataset, endpoint: int) -> tuple[float, np.ndarray]:
    """TMLE of the ATE for one endpoint.

    Returns
    -------
    psi_hat : float
        Plug-in estimate ``mean(Q*(1, W) - Q*(0, W))``.
    ic : ndarray, shape (n,)
        Efficient influence curve evaluated at the targeted fit, centered at
        ``psi_hat``; its sample mean is zero up to rounding.
    """
    model = fit_outcome_regression(data, endpoint)
    return _targeted(data, model, endpoint)


def influence_covariance(ic: np.ndarray) -> np.ndarray:
    """Empirical covariance of influence-curve columns with divisor n."""
    centered = ic - ic.mean(axis=0)
    return centered.T @ centered / ic.shape[0]


def estimate_all_endpoints(data: TrialDataset) -> EndpointEstimates:
    psi = np.empty(data.n_endpoints)
    ic = np.empty((data.n, data.n_endpoints))
    models = []
    for k in range(data.n_endpoints):
        model = fit_outcome_regression(data, k)
        psi[k], ic[:, k] = _targeted(data, model, k)
        models.append(model)
    return EndpointEstimates(
        psi=psi,
        ic=ic,
        rho=influence_covariance(ic),
        models=tuple(models),
        n_params=data.covariates.shape[1] + 2,
    )


def composite_ic(alpha, est: EndpointEstimates) -> np.ndarray:
    """Influence curve of the weighted composite: ``ic @ alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (est.ic.shape[1],):
        raise ValueError(f"weight vector has shape {alpha.shape}, expected ({est.ic.shape[1]},)")
    return est.ic @ alpha
