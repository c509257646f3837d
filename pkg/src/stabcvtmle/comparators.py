"""Benchmark global tests: O'Brien OLS, O'Brien rank-sum, Holm and Hochberg."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import stats

from .errors import DegenerateVarianceError
from .tmle import EndpointEstimates


@dataclass(frozen=True)
class ComparatorResult:
    statistic: float
    p_value: float
    reject: bool
    method: str
    rejected: tuple[bool, ...] = ()


def obrien_ols_tmle(
    est: EndpointEstimates, n: int, gamma: float, df: float, small_sample: bool = True
) -> ComparatorResult:
    """Equal-weight composite of endpoint TMLEs, Wald statistic with t reference.

    With ``small_sample`` the influence-curve covariance is inflated by
    ``n / (n - est.n_params)``; estimates built by hand carry ``n_params = 0``.
    """
    k = est.psi.shape[0]
    w = np.full(k, 1.0 / k)
    var = float(w @ est.inference_rho(small_sample) @ w)
    if not var > 0:
        raise DegenerateVarianceError(f"equal-weight composite variance {var} is not positive")
    t = math.sqrt(n) * float(w @ est.psi) / math.sqrt(var)
    crit = stats.t.ppf(1.0 - gamma, df)
    return ComparatorResult(t, float(stats.t.sf(t, df)), bool(t > crit), "obrien_ols")


def endpoint_pvalues(est: EndpointEstimates, n: int, df: float, small_sample: bool = True) -> np.ndarray:
    """One-sided upper-tail t p-values of the endpoint-specific TMLEs."""
    var = np.diag(est.inference_rho(small_sample))
    if (var <= 0).any():
        raise DegenerateVarianceError(f"endpoint variances {var} must be positive")
    t = math.sqrt(n) * est.psi / np.sqrt(var)
    return stats.t.sf(t, df)


def _check_pvalues(pvals) -> np.ndarray:
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1 or ((p < 0) | (p > 1) | np.isnan(p)).any():
        raise ValueError(f"p-values must be a vector in [0, 1], got {pvals}")
    return p


def holm(pvals, gamma: float) -> ComparatorResult:
    """Holm step-down: test ascending p-values at ``gamma / (K - j + 1)``, stop at the first failure."""
    p = _check_pvalues(pvals)
    k = p.shape[0]
    order = np.argsort(p, kind="stable")
    rejected = np.zeros(k, dtype=bool)
    for j, i in enumerate(order):
        if p[i] <= gamma / (k - j):
            rejected[i] = True
        else:
            break
    adjusted = min(1.0, k * float(p.min()))
    return ComparatorResult(float(rejected.sum()), adjusted, bool(rejected.any()), "holm", tuple(rejected))


def hochberg(pvals, gamma: float) -> ComparatorResult:
    """Hochberg step-up: the largest j with ``p_(j) <= gamma / (K - j + 1)`` rejects ``H_(1..j)``."""
    p = _check_pvalues(pvals)
    k = p.shape[0]
    order = np.argsort(p, kind="stable")
    rejected = np.zeros(k, dtype=bool)
    for j in range(k - 1, -1, -1):
        if p[order[j]] <= gamma / (k - j):
            rejected[order[: j + 1]] = True
            break
    adjusted = min(1.0, float(np.min((k - np.arange(k)) * p[order])))
    return ComparatorResult(float(rejected.sum()), adjusted, bool(rejected.any()), "hochberg", tuple(rejected))


def composite_ranks(outcomes) -> np.ndarray:
    """Sum over endpoints of midranks taken across all subjects."""
    y = np.atleast_2d(np.asarray(outcomes, dtype=float))
    return stats.rankdata(y, axis=0).sum(axis=1)


def rank_difference(composite, labels) -> np.ndarray:
    """Treated-minus-control mean composite, for one label vector or a (B, n) stack."""
    labels = np.asarray(labels, dtype=float)
    n1 = labels.sum(axis=-1)
    s1 = labels @ composite
    return s1 / n1 - (composite.sum() - s1) / (labels.shape[-1] - n1)


def obrien_ranksum(outcomes, arm, n_perm: int, gamma: float, rng: np.random.Generator) -> ComparatorResult:
    """Unadjusted O'Brien rank-sum test with a one-sided permutation p-value.

    The p-value is ``(1 + #{perm >= observed}) / (n_perm + 1)`` over uniform
    relabelings that keep the arm sizes fixed.
    """
    arm = np.asarray(arm).astype(np.int8)
    if arm.sum() == 0 or arm.sum() == arm.shape[0]:
        raise ValueError("both arms must be nonempty")
    comp = composite_ranks(outcomes)
    observed = float(rank_difference(comp, arm))
    perms = rng.permuted(np.broadcast_to(arm, (int(n_perm), arm.shape[0])), axis=1)
    null = rank_difference(comp, perms)
    # rank sums are exact multiples of 0.5, but the arm means are not; guard rounding
    tol = 1e-9 * max(1.0, abs(observed))
    p = (1.0 + np.count_nonzero(null >= observed - tol)) / (n_perm + 1.0)
    return ComparatorResult(observed, p, bool(p <= gamma), "obrien_ranksum")
