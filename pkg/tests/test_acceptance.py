"""End-to-end acceptance criteria at full simulation scale.

Each test prints one ``PASS``/``FAIL`` line describing the criterion and the
observed numbers. Scenario reports are computed once per session with the
default seed and 1,000 replications.
"""

import os
import time

import numpy as np
import pytest

from stabcvtmle import harness
from stabcvtmle.validation import run_all

pytestmark = pytest.mark.slow

REPS = 1000
JOBS = max(1, min(4, os.cpu_count() or 1))
STUDY1 = ("S1", "S2", "S3", "S4")
STUDY2 = ("global_null", "calibrated_alternative")


def _report(line_ok: bool, text: str, capsys) -> None:
    with capsys.disabled():
        print(f"\n{'PASS' if line_ok else 'FAIL'}  {text}", flush=True)


@pytest.fixture(scope="session")
def study1_reports():
    return {
        s: harness.run_scenario(harness.ScenarioConfig(study="study1", scenario=s, replications=REPS), jobs=JOBS)
        for s in STUDY1
    }


@pytest.fixture(scope="session")
def study2_reports():
    return {
        s: harness.run_scenario(harness.ScenarioConfig(study="study2", scenario=s, replications=REPS), jobs=JOBS)
        for s in STUDY2
    }


def _close(value, target, tol=0.05):
    return abs(value - target) <= tol


def test_criterion_1_study1_type_i_error(study1_reports, capsys):
    rep = study1_reports["S1"]
    rates = {m: rep.rate(m) for m in rep.methods}
    ok = all(0.010 <= r <= 0.040 for r in rates.values())
    _report(ok, "criterion 1 (Study 1 S1 type I in [0.010, 0.040]): " + _fmt(rates), capsys)
    assert ok


def test_criterion_2_study1_power(study1_reports, capsys):
    targets = {
        "stab_cvtmle": {"S2": 0.873, "S3": 0.562, "S4": 0.700},
        "obrien_ols": {"S2": 0.657, "S3": 0.645, "S4": 0.648},
        "holm": {"S2": 0.858, "S3": 0.472, "S4": 0.668},
        "obrien_ranksum": {"S2": 0.478, "S3": 0.526, "S4": 0.504},
    }
    failures = []
    for method, cells in targets.items():
        for s, target in cells.items():
            got = study1_reports[s].rate(method)
            if not _close(got, target):
                failures.append(f"{method}/{s}={got:.3f} vs {target}")
    for s in ("S2", "S3", "S4"):
        rep = study1_reports[s]
        if rep.rate("hochberg") < rep.rate("holm"):
            failures.append(f"Hochberg < Holm in {s}")
        if rep.rate("obrien_ols") <= rep.rate("obrien_ranksum"):
            failures.append(f"adjusted O'Brien does not beat unadjusted in {s}")
    # "highest" means no other method has a larger rejection rate
    for s, leader in (("S2", "stab_cvtmle"), ("S3", "obrien_ols"), ("S4", "stab_cvtmle")):
        rep = study1_reports[s]
        best = max(rep.rate(m) for m in rep.methods)
        if rep.rate(leader) < best:
            failures.append(f"{leader} not highest in {s}")
    summary = "; ".join(f"{s}: " + _fmt({m: study1_reports[s].rate(m) for m in harness.METHODS}) for s in ("S2", "S3", "S4"))
    _report(not failures, f"criterion 2 (Study 1 power and ordering): {summary}" + (f" | {failures}" if failures else ""), capsys)
    assert not failures


def test_criterion_3_study1_weights(study1_reports, capsys):
    targets = {"S1": 0.510, "S2": 0.887, "S3": 0.496, "S4": 0.764}
    got = {s: study1_reports[s].mean_weights[0] for s in STUDY1}
    ok = all(_close(got[s], t) for s, t in targets.items())
    _report(ok, "criterion 3 (Study 1 mean alpha_1 within 0.05): " + _fmt(got), capsys)
    assert ok


def test_criterion_4_study2(study2_reports, capsys):
    null, alt = study2_reports["global_null"], study2_reports["calibrated_alternative"]
    checks = [
        0.010 <= null.rate("obrien_ranksum") <= 0.040,
        0.010 <= null.rate("stab_cvtmle") <= 0.040,
        _close(alt.rate("obrien_ranksum"), 0.529),
        _close(alt.rate("stab_cvtmle"), 0.602),
        alt.rate("stab_cvtmle") > alt.rate("obrien_ranksum"),
    ]
    text = (
        f"null ranksum={null.rate('obrien_ranksum'):.3f} stab={null.rate('stab_cvtmle'):.3f}; "
        f"power ranksum={alt.rate('obrien_ranksum'):.3f} stab={alt.rate('stab_cvtmle'):.3f}"
    )
    _report(all(checks), f"criterion 4 (Study 2 type I and power): {text}", capsys)
    assert all(checks)


def test_criterion_5_property_suite(capsys):
    start = time.perf_counter()
    results = run_all(verbose=False)
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in results) and elapsed < 60
    failed = [r.name for r in results if not r.passed]
    _report(ok, f"criterion 5 (validate suite, {len(results)} checks in {elapsed:.1f}s < 60s){' failed: ' + str(failed) if failed else ''}", capsys)
    assert ok


def test_criterion_6_large_sample_weights(capsys):
    reps = 30
    common = dict(n=5000, replications=reps, methods=("stab_cvtmle",))
    s2 = harness.run_scenario(harness.ScenarioConfig(study="study1", scenario="S2", **common), jobs=JOBS)
    s1 = harness.run_scenario(harness.ScenarioConfig(study="study1", scenario="S1", **common), jobs=JOBS)
    w2, w1 = np.asarray(s2.mean_weights), np.asarray(s1.mean_weights)
    ok = w2[0] > 0.8 and np.abs(w1 - 0.5).max() <= 0.05
    _report(ok, f"criterion 6 (n=5000, {reps} reps): S2 mean alpha_1={w2[0]:.3f} > 0.8; S1 mean alpha={np.round(w1, 3).tolist()} near (0.5, 0.5)", capsys)
    assert ok


def _fmt(d):
    return ", ".join(f"{k}={v:.3f}" for k, v in d.items())
