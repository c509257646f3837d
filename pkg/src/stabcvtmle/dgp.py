"""Data-generating processes for the two simulation studies.

Study 1 is a main-terms linear model with two endpoints and two covariates.
Study 2 mimics a two-arm rare-disease trial with a walk-distance and a lung
function endpoint, covariate-dependent truncated baselines and arm-specific
change-score distributions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special, stats

from .data import TrialDataset
from .errors import ConfigurationError, InfeasibleTruncationError

MAX_REJECTION_ROUNDS = 1_000_000
MIN_ACCEPTANCE = 1e-6


@dataclass(frozen=True)
class GeneratedTrial:
    dataset: TrialDataset
    truth: np.ndarray
    baseline: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


# Study 1 -------------------------------------------------------------------

STUDY1_SCENARIOS = {
    "S1": (0.0, 0.0),
    "S2": (1.0, 0.0),
    "S3": (0.5, 0.5),
    "S4": (0.8, 0.2),
}


@dataclass(frozen=True)
class Study1Config:
    n: int = 50
    beta_a: tuple[float, float] = (0.0, 0.0)
    beta_w1: tuple[float, float] = (-0.1, -0.05)
    beta_w2: tuple[float, float] = (0.6, 0.3)
    intercept: float = 1.0
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.n < 10:
            raise ConfigurationError(f"Study 1 needs n >= 10, got {self.n}")

    @classmethod
    def scenario(cls, name: str, n: int = 50) -> "Study1Config":
        try:
            return cls(n=n, beta_a=STUDY1_SCENARIOS[name])
        except KeyError:
            raise ConfigurationError(
                f"unknown Study 1 scenario {name!r}; valid: {', '.join(STUDY1_SCENARIOS)}"
            ) from None


def study1_outcome_mean(cfg: Study1Config, w1, w2, a) -> np.ndarray:
    """Noise-free outcomes, shape (n, 2)."""
    w1, w2, a = (np.asarray(v, dtype=float)[:, None] for v in (w1, w2, a))
    return (
        cfg.intercept
        + np.asarray(cfg.beta_a) * a
        + np.asarray(cfg.beta_w1) * w1
        + np.asarray(cfg.beta_w2) * w2
    )


def gen_study1(cfg: Study1Config, rng: np.random.Generator) -> GeneratedTrial:
    n = cfg.n
    w1 = rng.integers(5, 19, size=n)
    w2 = (rng.random(n) < special.expit(0.3)).astype(float)
    a = (rng.random(n) < 0.5).astype(np.int8)
    eps = rng.standard_normal((n, 2)) * cfg.noise_sd
    y = study1_outcome_mean(cfg, w1, w2, a) + eps
    data = TrialDataset(np.column_stack([w1, w2]).astype(float), a, y, 0.5)
    return GeneratedTrial(data, np.array(cfg.beta_a, dtype=float))


# Truncated normal sampling ---------------------------------------------------


def truncated_normal_moments(mean: float, sd: float, lo: float, hi: float) -> tuple[float, float]:
    """Closed-form mean and variance of ``N(mean, sd^2)`` truncated to ``[lo, hi]``."""
    a, b = (lo - mean) / sd, (hi - mean) / sd
    z = stats.norm.cdf(b) - stats.norm.cdf(a)
    pa, pb = stats.norm.pdf(a), stats.norm.pdf(b)
    m = mean + sd * (pa - pb) / z
    v = sd**2 * (1.0 + (a * pa - b * pb) / z - ((pa - pb) / z) ** 2)
    return float(m), float(v)


def truncated_normal(mean: float, sd: float, lo: float, hi: float, rng: np.random.Generator, size=None):
    """Rejection sampler for ``N(mean, sd^2)`` restricted to ``[lo, hi]``."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    count = 1 if size is None else int(np.prod(size))
    if sd == 0:
        if not lo <= mean <= hi:
            raise InfeasibleTruncationError(f"degenerate mean {mean} outside [{lo}, {hi}]")
        out = np.full(count, float(mean))
    else:
        mass = stats.norm.cdf(hi, mean, sd) - stats.norm.cdf(lo, mean, sd)
        if mass < MIN_ACCEPTANCE:
            raise InfeasibleTruncationError(f"acceptance probability {mass:.3g} for [{lo}, {hi}]")
        out = np.empty(count)
        pending = np.arange(count)
        for _ in range(MAX_REJECTION_ROUNDS):
            draw = rng.normal(mean, sd, size=pending.size)
            ok = (draw >= lo) & (draw <= hi)
            out[pending[ok]] = draw[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
    return float(out[0]) if size is None else out.reshape(size)


def truncated_bvn_box(means, cov, lo, hi, rng: np.random.Generator, upper_open=(False, False)) -> np.ndarray:
    """Row-wise rejection sampling of ``N(means[i], cov)`` restricted to a box.

    ``upper_open[j]`` makes the upper edge of coordinate j exclusive.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    chol = np.linalg.cholesky(cov)
    out = np.empty_like(means)
    pending = np.arange(means.shape[0])
    for _ in range(MAX_REJECTION_ROUNDS):
        draw = means[pending] + rng.standard_normal((pending.size, means.shape[1])) @ chol.T
        below = np.where(upper_open, draw < hi, draw <= hi)
        ok = ((draw >= lo) & below).all(axis=1)
        out[pending[ok]] = draw[ok]
        pending = pending[~ok]
        if pending.size == 0:
            return out
    raise InfeasibleTruncationError(f"{pending.size} rows not accepted after {MAX_REJECTION_ROUNDS} rounds")


# Study 2 -------------------------------------------------------------------

SEVERITY_LEVELS = ("mild", "moderate", "severe")
REGION_LEVELS = ("NA", "EU", "Other")
STUDY2_SCENARIOS = ("global_null", "calibrated_alternative")


def _bivariate_cov(sd, corr) -> np.ndarray:
    s1, s2 = sd
    return np.array([[s1 * s1, corr * s1 * s2], [corr * s1 * s2, s2 * s2]])


@dataclass(frozen=True)
class Study2Config:
    """Study 2 constants; the defaults reproduce the trial-calibrated design."""

    n: int = 60
    scenario: str = "calibrated_alternative"
    age_mean: float = 15.0
    age_sd: float = 6.0
    age_bounds: tuple[float, float] = (5.0, 31.0)
    region_probs: tuple[float, float, float] = (0.40, 0.40, 0.20)
    severity_probs: tuple[float, float, float] = (0.31, 0.38, 0.31)
    mu_b: tuple[float, float] = (392.5, 55.45)
    sd_b: tuple[float, float] = (107.0, 14.0)
    rho_b: float = 0.30
    m_b: tuple[tuple[float, ...], ...] = ((-15, -60, -120, -10, 5), (-1.5, -6, -12, -1.5, 0.75))
    m_d: tuple[tuple[float, ...], ...] = ((-8, -18, -40, -4, 2), (-1, -5, -10, -0.8, 0.5))
    baseline_box: tuple[tuple[float, float], tuple[float, float]] = ((50.0, 650.0), (20.0, 80.0))
    placebo_mean: tuple[float, float] = (7.0, 0.8)
    placebo_sd: tuple[float, float] = (54.0, 9.6)
    active_mean: tuple[float, float] = (44.0, 3.4)
    active_sd: tuple[float, float] = (70.0, 10.0)
    rho_d: float = 0.25

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ConfigurationError(f"Study 2 needs an even n >= 4, got {self.n}")
        if self.scenario not in STUDY2_SCENARIOS:
            raise ConfigurationError(
                f"unknown Study 2 scenario {self.scenario!r}; valid: {', '.join(STUDY2_SCENARIOS)}"
            )
        for name, cov in (("baseline", self.baseline_resid_cov()), *(
            (f"change arm {a}", self.change_resid_cov(a)) for a in (0, 1)
        )):
            smallest = float(np.linalg.eigvalsh(cov).min())
            if smallest < 0:
                raise ConfigurationError(f"{name} residual covariance not PSD: eigenvalue {smallest:.4g}")

    @property
    def age_moments(self) -> tuple[float, float]:
        return truncated_normal_moments(self.age_mean, self.age_sd, *self.age_bounds)

    def design_covariance(self) -> np.ndarray:
        """Analytic covariance of the five centered design columns."""
        v = np.zeros((5, 5))
        v[0, 0] = self.age_moments[1] / 100.0
        p_mod, p_sev = self.severity_probs[1], self.severity_probs[2]
        p_eu, p_oth = self.region_probs[1], self.region_probs[2]
        v[1:3, 1:3] = [[p_mod * (1 - p_mod), -p_mod * p_sev], [-p_mod * p_sev, p_sev * (1 - p_sev)]]
        v[3:5, 3:5] = [[p_eu * (1 - p_eu), -p_eu * p_oth], [-p_eu * p_oth, p_oth * (1 - p_oth)]]
        return v

    def _explained(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        return m @ self.design_covariance() @ m.T

    def baseline_resid_cov(self) -> np.ndarray:
        return _bivariate_cov(self.sd_b, self.rho_b) - self._explained(self.m_b)

    def change_params(self, arm: int) -> tuple[np.ndarray, tuple[float, float]]:
        if arm == 1 and self.scenario == "calibrated_alternative":
            return np.asarray(self.active_mean, dtype=float), self.active_sd
        return np.asarray(self.placebo_mean, dtype=float), self.placebo_sd

    def change_resid_cov(self, arm: int) -> np.ndarray:
        _, sd = self.change_params(arm)
        return _bivariate_cov(sd, self.rho_d) - self._explained(self.m_d)

    def truth(self) -> np.ndarray:
        return self.change_params(1)[0] - self.change_params(0)[0]


def centered_design(age, severity, region, age_mean: float | None = None) -> np.ndarray:
    """Five-column design: ``(age - E[age]) / 10`` and four centered indicators.

    Centering constants are the population probabilities of the default Study 2
    design; ``age_mean`` defaults to the truncated-normal mean of that design.
    """
    severity = np.asarray(severity)
    region = np.asarray(region)
    bad = set(np.unique(severity)) - set(SEVERITY_LEVELS) | set(np.unique(region)) - set(REGION_LEVELS)
    if bad:
        raise ValueError(f"unknown categories {sorted(bad)}")
    if age_mean is None:
        age_mean = _DEFAULT_AGE_MEAN
    return np.column_stack(
        [
            (np.asarray(age, dtype=float) - age_mean) / 10.0,
            (severity == "moderate") - 0.38,
            (severity == "severe") - 0.31,
            (region == "EU") - 0.40,
            (region == "Other") - 0.20,
        ]
    )


_DEFAULT_AGE_MEAN = truncated_normal_moments(15.0, 6.0, 5.0, 31.0)[0]


def gen_study2(cfg: Study2Config, rng: np.random.Generator) -> GeneratedTrial:
    n = cfg.n
    age = truncated_normal(cfg.age_mean, cfg.age_sd, *cfg.age_bounds, rng, size=n)
    region = np.asarray(REGION_LEVELS)[rng.choice(3, size=n, p=cfg.region_probs)]
    severity = np.asarray(SEVERITY_LEVELS)[rng.choice(3, size=n, p=cfg.severity_probs)]
    x = centered_design(age, severity, region, age_mean=cfg.age_moments[0])

    (b_lo1, b_hi1), (b_lo2, b_hi2) = cfg.baseline_box
    baseline = truncated_bvn_box(
        np.asarray(cfg.mu_b) + x @ np.asarray(cfg.m_b, dtype=float).T,
        cfg.baseline_resid_cov(),
        (b_lo1, b_lo2),
        (b_hi1, b_hi2),
        rng,
        upper_open=(False, True),
    )

    arm = rng.permutation(np.repeat(np.array([0, 1], dtype=np.int8), n // 2))
    changes = np.empty((n, 2))
    shift = x @ np.asarray(cfg.m_d, dtype=float).T
    z = rng.standard_normal((n, 2))
    for a in (0, 1):
        rows = arm == a
        mean, _ = cfg.change_params(a)
        chol = np.linalg.cholesky(cfg.change_resid_cov(a))
        changes[rows] = mean + shift[rows] + z[rows] @ chol.T

    data = TrialDataset(x, arm, changes, 0.5)
    extras = {"age": age, "region": region, "severity": severity}
    return GeneratedTrial(data, cfg.truth(), baseline=baseline, extras=extras)


def write_trial_csv(trial: GeneratedTrial, path) -> None:
    """One row per subject: covariates, arm, outcomes (and baselines when present)."""
    d = trial.dataset
    header = [f"w{j + 1}" for j in range(d.covariates.shape[1])] + ["arm"]
    header += [f"y{k + 1}" for k in range(d.n_endpoints)]
    if trial.baseline is not None:
        header += [f"baseline{k + 1}" for k in range(trial.baseline.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(d.n):
            row = [repr(float(v)) for v in d.covariates[i]] + [int(d.arm[i])]
            row += [repr(float(v)) for v in d.outcomes[i]]
            if trial.baseline is not None:
                row += [repr(float(v)) for v in trial.baseline[i]]
            writer.writerow(row)


def read_trial_csv(path) -> TrialDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader])
    arm_col = header.index("arm")
    y_cols = [j for j, h in enumerate(header) if h.startswith("y")]
    return TrialDataset(rows[:, :arm_col], rows[:, arm_col].astype(np.int8), rows[:, y_cols], 0.5)
