"""Signal-to-noise weight selection on the simplex and its stabilization.

The optimizer enumerates the faces of the simplex. On a face with support
``S`` the only interior stationary direction of ``a @ psi / sqrt(a @ rho @ a)``
is proportional to ``pinv(rho[S, S]) @ psi[S]``; every feasible candidate from
every face, plus the vertices and the reference weights, is scored and the best
one kept. The same enumeration runs vectorized over Monte Carlo draws when
calibrating the supremum statistic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
import math

import numpy as np

from .errors import CovarianceError, DegenerateVarianceError

SIMPLEX_TOL = 1e-12
TIE_TOL = 1e-12


def uniform_weights(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def check_simplex(alpha, k: int | None = None) -> np.ndarray:
    """Return ``alpha`` as a float array after checking it lies on the simplex."""
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or (k is not None and a.shape[0] != k):
        raise ValueError(f"weight vector has shape {a.shape}, expected ({k},)")
    if not np.isfinite(a).all() or (a < 0).any() or abs(a.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"weights {a} are not on the simplex")
    return a


@dataclass(frozen=True)
class StabilizationConfig:
    """Tuning of the shrinkage step.

    ``c_constant`` is C in ``lambda = min(1, C * ln(n) * p)``; ``mc_draws`` is the
    number of Monte Carlo draws used for the training-fold p-value. The
    reference weights default to equal weights once K is known.
    ``small_sample`` deflates the training statistic by the HC1 factor of
    its in-sample covariance before it is compared with the null draws.
    """

    c_constant: float = 0.25
    mc_draws: int = 5000
    alpha_ref: tuple[float, ...] | None = None
    small_sample: bool = True

    def __post_init__(self):
        if not self.c_constant > 0:
            raise ValueError(f"C must be positive, got {self.c_constant}")
        if int(self.mc_draws) < 1000:
            raise ValueError(f"need at least 1000 Monte Carlo draws, got {self.mc_draws}")
        if self.alpha_ref is not None:
            check_simplex(self.alpha_ref)
            object.__setattr__(self, "alpha_ref", tuple(float(x) for x in self.alpha_ref))

    def reference(self, k: int) -> np.ndarray:
        if self.alpha_ref is None:
            return uniform_weights(k)
        return check_simplex(self.alpha_ref, k)


@dataclass(frozen=True)
class TrainingFoldSummary:
    alpha_adapt: np.ndarray
    t_star: float
    p_value: float
    alpha_stab: np.ndarray
    shrinkage: float = field(default=float("nan"))


def snr(alpha, psi, rho) -> float:
    """``(alpha @ psi) / sqrt(alpha @ rho @ alpha)``."""
    alpha = np.asarray(alpha, dtype=float)
    var = float(alpha @ np.asarray(rho, dtype=float) @ alpha)
    if not var > 0:
        raise DegenerateVarianceError(f"composite variance {var} is not positive")
    return float(alpha @ np.asarray(psi, dtype=float)) / math.sqrt(var)


@lru_cache(maxsize=None)
def _faces(k: int) -> tuple[tuple[int, ...], ...]:
    return tuple(s for size in range(2, k + 1) for s in combinations(range(k), size))


def _face_candidates(psi: np.ndarray, rho: np.ndarray):
    """Feasible stationary points on every face of dimension >= 1.

    ``psi`` has shape (B, K). Yields ``(support, weights)`` with weights of
    shape (|S|, B) holding NaN where the face has no feasible candidate.
    """
    for s in _faces(psi.shape[1]):
        idx = list(s)
        d = np.linalg.pinv(rho[np.ix_(idx, idx)]) @ psi[:, idx].T
        total = d.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            x = d / total
        ok = (np.abs(total) > 0) & (x >= -1e-12).all(axis=0)
        x = np.where(ok, np.clip(x, 0.0, None), np.nan)
        yield idx, x / np.where(ok, x.sum(axis=0), 1.0)


def max_snr_batch(psi, rho) -> np.ndarray:
    """Supremum over the simplex of the signal-to-noise ratio, row by row.

    Parameters
    ----------
    psi : ndarray, shape (B, K)
        One numerator vector per row.
    rho : ndarray, shape (K, K)
        Shared covariance with positive diagonal.
    """
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    rho = np.asarray(rho, dtype=float)
    best = psi / np.sqrt(np.diag(rho))
    best = best.max(axis=1)
    for idx, x in _face_candidates(psi, rho):
        sub = rho[np.ix_(idx, idx)]
        var = np.einsum("ib,ij,jb->b", x, sub, x)
        num = np.einsum("ib,bi->b", x, psi[:, idx])
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.where(var > 0, num / np.sqrt(np.where(var > 0, var, 1.0)), np.nan)
        best = np.fmax(best, val)
    return best


def optimize_weights(psi, rho, alpha_ref=None) -> tuple[np.ndarray, float]:
    """Simplex point maximizing the signal-to-noise ratio, and the maximum.

    Ties within 1e-12 go to the candidate nearest ``alpha_ref`` (equal weights
    by default), then to the lexicographically smallest.
    """
    psi = np.asarray(psi, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if not (np.isfinite(psi).all() and np.isfinite(rho).all()):
        raise ValueError("psi and rho must be finite")
    k = psi.shape[0]
    if rho.shape != (k, k):
        raise ValueError(f"rho has shape {rho.shape}, expected ({k}, {k})")
    ref = uniform_weights(k) if alpha_ref is None else check_simplex(alpha_ref, k)

    candidates = [np.eye(k)[j] for j in range(k)]
    candidates.append(ref)
    for idx, x in _face_candidates(psi[None, :], rho):
        if not np.isnan(x[:, 0]).any():
            full = np.zeros(k)
            full[idx] = x[:, 0]
            # rounding noise around the reference must not outrank the reference itself
            if np.abs(full - ref).max() > SIMPLEX_TOL:
                candidates.append(full)

    scored = []
    for a in candidates:
        var = float(a @ rho @ a)
        if var > 0:
            scored.append((float(a @ psi) / math.sqrt(var), a))
    if not scored:
        raise DegenerateVarianceError("no simplex point has positive composite variance")
    top = max(v for v, _ in scored)
    tied = [a for v, a in scored if v >= top - TIE_TOL * max(1.0, abs(top))]
    chosen = min(tied, key=lambda a: (round(float(np.sum((a - ref) ** 2)), 15), tuple(a)))
    return chosen.copy(), top


def repair_psd(rho) -> np.ndarray:
    """Clip negative eigenvalues at zero; fail on materially indefinite input."""
    rho = np.asarray(rho, dtype=float)
    rho = (rho + rho.T) / 2.0
    vals, vecs = np.linalg.eigh(rho)
    trace = float(np.trace(rho))
    if vals.min() < -1e-6 * max(trace, 0.0) or not trace > 0:
        raise CovarianceError(f"covariance has eigenvalue {vals.min():.3g} with trace {trace:.3g}")
    if vals.min() >= 0:
        return rho
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def _null_factor(rho: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(rho)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def supremum_null_draws(rho, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Draws of ``sup_alpha alpha @ Z / sqrt(alpha @ rho @ alpha)`` with ``Z ~ N(0, rho)``."""
    rho = repair_psd(rho)
    if (np.diag(rho) <= 0).any():
        raise CovarianceError("covariance needs a positive diagonal")
    z = rng.standard_normal((int(n_draws), rho.shape[0])) @ _null_factor(rho).T
    return max_snr_batch(z, rho)


def supremum_null_pvalue(t_star: float, rho, cfg: StabilizationConfig, rng: np.random.Generator) -> float:
    """Add-one Monte Carlo p-value ``(1 + #{S_b >= t_star}) / (B + 1)``."""
    draws = supremum_null_draws(rho, cfg.mc_draws, rng)
    return (1.0 + np.count_nonzero(draws >= t_star)) / (draws.shape[0] + 1.0)


def shrinkage_weight(p_value: float, n: int, c_constant: float) -> float:
    return min(1.0, c_constant * math.log(n) * p_value)


def stabilize(alpha_adapt, p_value: float, n: int, cfg: StabilizationConfig) -> np.ndarray:
    """Shrink toward the reference by ``min(1, C * ln(n) * p_value)``."""
    if not 0.0 < p_value <= 1.0:
        raise ValueError(f"p-value must lie in (0, 1], got {p_value}")
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    alpha_adapt = np.asarray(alpha_adapt, dtype=float)
    ref = cfg.reference(alpha_adapt.shape[0])
    lam = shrinkage_weight(p_value, n, cfg.c_constant)
    if lam >= 1.0:
        return ref.copy()
    return (1.0 - lam) * alpha_adapt + lam * ref
