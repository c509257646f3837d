"""Quick invariant suite behind ``stabcvtmle validate``.

Every check draws its own synthetic data from fixed streams and returns a
:class:`Check`; the whole suite is meant to finish in well under a minute.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import time

import numpy as np

from . import comparators, cv, dgp, tmle, weights
from .data import TrialDataset
from .harness import ScenarioConfig, run_scenario
from .streams import stream

SEED = 20270101


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _rng(i: int) -> np.random.Generator:
    return stream(SEED, i, "validate")


def random_dataset(rng: np.random.Generator, n: int = 80, d: int = 3, k: int = 3, g1: float = 0.5) -> TrialDataset:
    """Gaussian covariates, Bernoulli(g1) arm, correlated linear outcomes."""
    w = rng.normal(size=(n, d))
    a = (rng.random(n) < g1).astype(np.int8)
    a[:2], a[2:4] = 0, 1
    beta = rng.normal(size=(d, k))
    mix = rng.normal(size=(k, k))
    y = w @ beta + rng.normal(size=k) * a[:, None] + rng.normal(size=(n, k)) @ mix
    return TrialDataset(w, a, y, g1)


def aipw(data: TrialDataset, endpoint: int) -> float:
    """Closed-form AIPW with the same OLS outcome regression and the known propensity."""
    model = tmle.fit_outcome_regression(data, endpoint)
    y, w, a, g1 = data.outcomes[:, endpoint], data.covariates, data.arm, data.propensity
    q1, q0 = model.predict(w, 1), model.predict(w, 0)
    q_obs = np.where(a == 1, q1, q0)
    h = np.where(a == 1, 1.0 / g1, -1.0 / (1.0 - g1))
    return float(np.mean(h * (y - q_obs) + q1 - q0))


def grid_argmax(psi, rho, step: float = 1e-4):
    """Brute-force maximizer over a K=2 simplex grid."""
    a1 = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    alphas = np.column_stack([a1, 1.0 - a1])
    var = np.einsum("bi,ij,bj->b", alphas, rho, alphas)
    val = alphas @ psi / np.sqrt(var)
    j = int(np.argmax(val))
    return alphas[j], float(val[j])


def check_aipw(reps: int = 100) -> Check:
    worst = 0.0
    for r in range(reps):
        rng = _rng(r)
        data = random_dataset(rng, g1=float(rng.uniform(0.3, 0.7)))
        for k in range(data.n_endpoints):
            worst = max(worst, abs(tmle.tmle_ate(data, k)[0] - aipw(data, k)))
    return Check("(a) TMLE equals AIPW", worst <= 1e-10, f"max |diff| = {worst:.2e} over {reps} datasets")


def check_cv_score(reps: int = 20) -> Check:
    worst = 0.0
    cfg = weights.StabilizationConfig(c_constant=0.25, mc_draws=1000)
    for r in range(reps):
        rng = _rng(1000 + r)
        data = random_dataset(rng, n=60, k=2)
        gen = _rng(2000 + r)
        fold_rng, mc_rng = gen.spawn(2)
        plan = cv.make_folds(data.n, 5, fold_rng)
        folds = [cv.run_fold(data, plan, v, cfg, s) for v, s in enumerate(mc_rng.spawn(5))]
        _, _, ic = cv.pooled_target(folds, data)
        worst = max(worst, abs(ic.mean()) / max(ic.std(), 1e-300))
    return Check("(b) CV score equation", worst <= 1e-8, f"max |mean|/SD = {worst:.2e} over {reps} datasets")


def check_optimizer(reps: int = 100) -> Check:
    worst = 0.0
    for r in range(reps):
        rng = _rng(3000 + r)
        psi = rng.normal(size=2)
        m = rng.normal(size=(2, 2))
        rho = m @ m.T + 0.1 * np.eye(2)
        alpha, _ = weights.optimize_weights(psi, rho)
        grid, _ = grid_argmax(psi, rho)
        worst = max(worst, float(np.abs(alpha - grid).max()))
    return Check("(c) optimizer vs 1e-4 grid", worst <= 1e-3, f"max coordinate gap = {worst:.2e}")


def check_stabilize() -> Check:
    cfg = weights.StabilizationConfig(c_constant=0.25, mc_draws=1000)
    ok = True
    out = weights.stabilize([1.0, 0.0], 0.5, 50, cfg)
    lam = 0.25 * math.log(50) * 0.5
    ok &= bool(np.allclose(out, [1 - lam + lam / 2, lam / 2], atol=1e-15))
    ok &= bool(np.array_equal(weights.stabilize([1.0, 0.0], 1.0, 100, cfg), [0.5, 0.5]))
    rng = _rng(4000)
    for _ in range(200):
        a = rng.dirichlet(np.ones(3))
        p = float(rng.uniform(1e-4, 1.0))
        s = weights.stabilize(a, p, int(rng.integers(2, 10_000)), cfg)
        ref = np.full(3, 1 / 3)
        lo, hi = np.minimum(a, ref), np.maximum(a, ref)
        ok &= bool((s >= lo - 1e-15).all() and (s <= hi + 1e-15).all() and abs(s.sum() - 1) < 1e-12)
    return Check("(d) stabilize truncation and convexity", ok, "arithmetic example, truncation, 200 random inputs")


def check_pvalue(reps: int = 300) -> Check:
    cfg = weights.StabilizationConfig(mc_draws=1000)
    rho = np.array([[1.0, 0.4], [0.4, 2.0]])
    ts = np.linspace(-2, 4, 13)
    ps = [weights.supremum_null_pvalue(t, rho, cfg, _rng(5000)) for t in ts]
    mono = bool(np.all(np.diff(ps) <= 0))
    pvals = []
    for r in range(reps):
        data = dgp.gen_study1(dgp.Study1Config(n=50), _rng(6000 + r)).dataset
        est = tmle.estimate_all_endpoints(data)
        _, unit = weights.optimize_weights(est.psi, est.rho)
        t = math.sqrt(data.n) * unit / math.sqrt(tmle.small_sample_factor(data.n, est.n_params))
        pvals.append(weights.supremum_null_pvalue(t, est.rho, cfg, _rng(7000 + r)))
    pvals = np.asarray(pvals)
    worst = max((pvals <= q).mean() - (q + 3 * math.sqrt(q * (1 - q) / reps)) for q in (0.05, 0.10, 0.25))
    return Check(
        "(e) p-value monotone and super-uniform",
        mono and worst <= 0,
        f"monotone={mono}; worst excess over 3-SE band = {worst:+.3f} ({reps} null datasets)",
    )


def check_step_dominance(reps: int = 10_000) -> Check:
    rng = _rng(8000)
    bad = 0
    for _ in range(reps):
        k = int(rng.integers(2, 6))
        p = rng.beta(0.5, 3.0, size=k)
        if comparators.holm(p, 0.025).reject and not comparators.hochberg(p, 0.025).reject:
            bad += 1
    return Check("(f) Hochberg rejects whenever Holm does", bad == 0, f"{bad} violations in {reps} p-vectors")


def check_study2_generator(reps: int = 50) -> Check:
    ok = True
    for scenario in dgp.STUDY2_SCENARIOS:
        cfg = dgp.Study2Config(scenario=scenario)
        for r in range(reps):
            trial = dgp.gen_study2(cfg, _rng(9000 + r))
            b = trial.baseline
            ok &= bool(((b[:, 0] >= 50) & (b[:, 0] <= 650) & (b[:, 1] >= 20) & (b[:, 1] < 80)).all())
            ok &= int(trial.dataset.arm.sum()) == cfg.n // 2
    return Check("(g) Study 2 truncation boxes and balance", ok, f"{2 * reps} generated trials")


def check_worker_determinism() -> Check:
    cfg = ScenarioConfig(study="study1", scenario="S4", replications=6, mc_draws=1000, n_perm=1000)
    one = run_scenario(cfg, jobs=1)
    two = run_scenario(cfg, jobs=2)
    same = one.rejections == two.rejections and one.mean_weights == two.mean_weights
    return Check("(h) results independent of worker count", same, "jobs=1 vs jobs=2 on 6 replications")


CHECKS = (
    check_aipw,
    check_cv_score,
    check_optimizer,
    check_stabilize,
    check_pvalue,
    check_step_dominance,
    check_study2_generator,
    check_worker_determinism,
)


def run_all(verbose: bool = True) -> list[Check]:
    results = []
    for fn in CHECKS:
        start = time.perf_counter()
        res = fn()
        results.append(res)
        if verbose:
            status = "PASS" if res.passed else "FAIL"
            print(f"{status}  {res.name}: {res.detail} [{time.perf_counter() - start:.1f}s]", flush=True)
    return results
