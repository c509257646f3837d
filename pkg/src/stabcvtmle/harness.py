"""Replicated simulation runs and report serialization."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import csv
import io
import json
import math
import time

import numpy as np

from . import comparators, dgp
from .cv import default_df, stabilized_cvtmle_test
from .errors import ConfigurationError
from .streams import stream
from .tmle import estimate_all_endpoints
from .weights import StabilizationConfig

METHODS = ("holm", "hochberg", "obrien_ols", "stab_cvtmle", "obrien_ranksum")
METHOD_LABELS = {
    "holm": "Holm",
    "hochberg": "Hochberg",
    "obrien_ols": "O'Brien",
    "stab_cvtmle": "Stab. CV-TMLE",
    "obrien_ranksum": "Unadj. O'Brien",
}
STUDY1_DEFAULT_METHODS = METHODS
STUDY2_DEFAULT_METHODS = ("obrien_ranksum", "stab_cvtmle")
DEFAULT_SEED = 202701


@dataclass(frozen=True)
class ScenarioConfig:
    study: str = "study1"
    scenario: str = "S1"
    n: int | None = None
    replications: int = 1000
    base_seed: int = DEFAULT_SEED
    gamma: float = 0.025
    v_folds: int = 10
    c_constant: float | None = None
    mc_draws: int = 5000
    n_perm: int = 5000
    methods: tuple[str, ...] | None = None
    df: int | None = None
    small_sample: bool = True

    def __post_init__(self):
        if self.study not in ("study1", "study2"):
            raise ConfigurationError(f"unknown study {self.study!r}; valid: study1, study2")
        valid = tuple(dgp.STUDY1_SCENARIOS) if self.study == "study1" else dgp.STUDY2_SCENARIOS
        if self.scenario not in valid:
            raise ConfigurationError(
                f"unknown {self.study} scenario {self.scenario!r}; valid: {', '.join(valid)}"
            )
        if self.replications < 1:
            raise ConfigurationError(f"replications must be >= 1, got {self.replications}")
        if not 0.0 < self.gamma < 0.5:
            raise ConfigurationError(f"gamma must lie in (0, 0.5), got {self.gamma}")
        methods = self.methods
        if methods is None:
            methods = STUDY1_DEFAULT_METHODS if self.study == "study1" else STUDY2_DEFAULT_METHODS
        unknown = set(methods) - set(METHODS)
        if unknown:
            raise ConfigurationError(f"unknown methods {sorted(unknown)}; valid: {', '.join(METHODS)}")
        object.__setattr__(self, "methods", tuple(methods))
        if self.n is None:
            object.__setattr__(self, "n", 50 if self.study == "study1" else 60)
        if self.c_constant is None:
            object.__setattr__(self, "c_constant", 0.25 if self.study == "study1" else 2.0)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ConfigurationError(f"unknown config keys {sorted(extra)}")
        if raw.get("methods") is not None:
            raw["methods"] = tuple(raw["methods"])
        return cls(**raw)

    def data_config(self):
        if self.study == "study1":
            return dgp.Study1Config.scenario(self.scenario, n=self.n)
        return dgp.Study2Config(n=self.n, scenario=self.scenario)

    def stabilization(self) -> StabilizationConfig:
        return StabilizationConfig(
            c_constant=self.c_constant, mc_draws=self.mc_draws, small_sample=self.small_sample
        )


@dataclass(frozen=True)
class ReplicationRecord:
    replication: int
    rejects: dict
    mean_weights: tuple[float, ...] | None


@dataclass
class ScenarioReport:
    study: str
    scenario: str
    replications: int
    methods: tuple[str, ...]
    rejections: dict
    mean_weights: tuple[float, ...] | None
    wall_clock: float = 0.0
    records: list = field(default_factory=list)

    def rate(self, method: str) -> float:
        return self.rejections[method] / self.replications

    def se(self, method: str) -> float:
        p = self.rate(method)
        return math.sqrt(p * (1.0 - p) / self.replications)


class ReplicationError(RuntimeError):
    def __init__(self, replication: int, cause: Exception):
        super().__init__(f"replication {replication} failed: {type(cause).__name__}: {cause}")
        self.replication = replication


def run_replication(cfg: ScenarioConfig, r: int) -> ReplicationRecord:
    data_cfg = cfg.data_config()
    gen = dgp.gen_study1 if cfg.study == "study1" else dgp.gen_study2
    try:
        data = gen(data_cfg, stream(cfg.base_seed, r, "data")).dataset
        df = default_df(data.n, data.n_endpoints) if cfg.df is None else cfg.df
        rejects = {}
        weights = None
        needs_est = {"holm", "hochberg", "obrien_ols"} & set(cfg.methods)
        est = estimate_all_endpoints(data) if needs_est else None
        if needs_est:
            pvals = comparators.endpoint_pvalues(est, data.n, df, cfg.small_sample)
        for m in cfg.methods:
            if m == "holm":
                rejects[m] = comparators.holm(pvals, cfg.gamma).reject
            elif m == "hochberg":
                rejects[m] = comparators.hochberg(pvals, cfg.gamma).reject
            elif m == "obrien_ols":
                rejects[m] = comparators.obrien_ols_tmle(est, data.n, cfg.gamma, df, cfg.small_sample).reject
            elif m == "obrien_ranksum":
                res = comparators.obrien_ranksum(
                    data.outcomes, data.arm, cfg.n_perm, cfg.gamma, stream(cfg.base_seed, r, "permutation")
                )
                rejects[m] = res.reject
            elif m == "stab_cvtmle":
                res = stabilized_cvtmle_test(
                    data, cfg.stabilization(), cfg.v_folds, cfg.gamma, stream(cfg.base_seed, r, "cvtmle"), df=df
                )
                rejects[m] = res.reject
                weights = tuple(float(x) for x in res.mean_weights)
    except Exception as exc:
        raise ReplicationError(r, exc) from exc
    return ReplicationRecord(r, rejects, weights)


def _run_chunk(args):
    cfg, reps = args
    return [run_replication(cfg, r) for r in reps]


def run_scenario(cfg: ScenarioConfig, jobs: int = 1, keep_records: bool = False) -> ScenarioReport:
    """Run every configured method on ``cfg.replications`` independent datasets.

    Replication ``r`` draws from streams keyed by ``(base_seed, r, purpose)``,
    so the result does not depend on ``jobs``.
    """
    start = time.perf_counter()
    reps = range(cfg.replications)
    if jobs <= 1:
        records = [run_replication(cfg, r) for r in reps]
    else:
        chunks = [(cfg, list(reps[i::jobs])) for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = [rec for chunk in pool.map(_run_chunk, chunks) for rec in chunk]
        records.sort(key=lambda rec: rec.replication)
    rejections = {m: sum(rec.rejects[m] for rec in records) for m in cfg.methods}
    weights = [rec.mean_weights for rec in records if rec.mean_weights is not None]
    mean_weights = tuple(float(x) for x in np.mean(weights, axis=0)) if weights else None
    return ScenarioReport(
        study=cfg.study,
        scenario=cfg.scenario,
        replications=cfg.replications,
        methods=cfg.methods,
        rejections=rejections,
        mean_weights=mean_weights,
        wall_clock=time.perf_counter() - start,
        records=records if keep_records else [],
    )


# Serialization -------------------------------------------------------------

CSV_FIELDS = ("study", "scenario", "method", "replications", "rejections", "rate", "se", "mean_weights")


def report_to_csv(report: ScenarioReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    weights = "" if report.mean_weights is None else ";".join(repr(w) for w in report.mean_weights)
    for m in report.methods:
        writer.writerow(
            [
                report.study,
                report.scenario,
                m,
                report.replications,
                report.rejections[m],
                repr(report.rate(m)),
                repr(report.se(m)),
                weights,
            ]
        )
    return buf.getvalue()


def report_from_csv(text: str) -> ScenarioReport:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("CSV holds no method rows")
    first = rows[0]
    weights = tuple(float(w) for w in first["mean_weights"].split(";")) if first["mean_weights"] else None
    return ScenarioReport(
        study=first["study"],
        scenario=first["scenario"],
        replications=int(first["replications"]),
        methods=tuple(r["method"] for r in rows),
        rejections={r["method"]: int(r["rejections"]) for r in rows},
        mean_weights=weights,
    )


def report_to_markdown(report: ScenarioReport) -> str:
    k = 0 if report.mean_weights is None else len(report.mean_weights)
    head = ["Study", "Scenario", "Reps"] + [METHOD_LABELS[m] for m in report.methods]
    head += [f"mean alpha_{j + 1}" for j in range(k)]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    if report.methods:
        cells = [report.study, report.scenario, str(report.replications)]
        cells += [f"{report.rate(m):.3f}" for m in report.methods]
        cells += [f"{w:.3f}" for w in (report.mean_weights or ())]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_report(report: ScenarioReport, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        text = report_to_csv(report)
    elif fmt == "markdown":
        text = report_to_markdown(report)
    else:
        raise ValueError(f"unknown format {fmt!r}; valid: csv, markdown")
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_records_csv(report: ScenarioReport, path) -> None:
    """Per-replication audit dump: reject flags and mean stabilized weights."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        k = max((len(r.mean_weights) for r in report.records if r.mean_weights), default=0)
        writer.writerow(["replication", *report.methods, *[f"alpha_{j + 1}" for j in range(k)]])
        for rec in report.records:
            writer.writerow(
                [rec.replication, *[int(rec.rejects[m]) for m in report.methods], *(rec.mean_weights or ())]
            )


# Paper tables ----------------------------------------------------------------

TABLE1_ORDER = ("holm", "hochberg", "obrien_ols", "stab_cvtmle", "obrien_ranksum")


def tables_markdown(study1: dict, study2: dict) -> str:
    """Markdown analogs of the power, weight and Study 2 tables.

    ``study1`` maps S1..S4 to reports; ``study2`` maps scenario names to reports.
    """
    out = []
    if study1:
        out.append("Table 1. Study 1 rejection rates\n")
        head = ["Scenario", "(beta_A1, beta_A2)"] + [METHOD_LABELS[m] for m in TABLE1_ORDER]
        out += ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for name, rep in study1.items():
            b = dgp.STUDY1_SCENARIOS[name]
            cells = [name, f"({b[0]:g}, {b[1]:g})"]
            cells += [f"{rep.rate(m):.3f}" if m in rep.rejections else "-" for m in TABLE1_ORDER]
            out.append("| " + " | ".join(cells) + " |")
        out.append("\nTable 2. Average stabilized CV-TMLE weights, Study 1\n")
        out += ["| Scenario | mean alpha_1 | mean alpha_2 |", "|---|---|---|"]
        for name, rep in study1.items():
            w = rep.mean_weights or (float("nan"), float("nan"))
            out.append(f"| {name} | {w[0]:.3f} | {w[1]:.3f} |")
    if study2:
        out.append("\nTable 3. Study 2 rejection rates\n")
        out += ["| Scenario | Metric | O'Brien (unadj.) | Stab. CV-TMLE |", "|---|---|---|---|"]
        for name, rep in study2.items():
            metric = "Type I error rate" if name == "global_null" else "Power"
            cells = [f"{rep.rate(m):.3f}" if m in rep.rejections else "-" for m in STUDY2_DEFAULT_METHODS]
            out.append(f"| {name} | {metric} | {cells[0]} | {cells[1]} |")
    return "\n".join(out) + "\n"


def config_dict(cfg: ScenarioConfig) -> dict:
    d = asdict(cfg)
    d["methods"] = list(cfg.methods)
    return d
