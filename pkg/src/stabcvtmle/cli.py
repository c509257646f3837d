"""Command-line driver: ``run``, ``validate`` and ``tables``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import dgp, harness
from .errors import ConfigurationError

log = logging.getLogger("stabcvtmle")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _methods(text: str) -> tuple[str, ...]:
    return tuple(m for m in (s.strip() for s in text.split(",")) if m)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stabcvtmle", description="Stabilized CV-TMLE global test simulations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--config", type=Path, help="JSON file with ScenarioConfig fields; flags override it")
    run.add_argument("--study", choices=("study1", "study2"))
    run.add_argument("--scenario")
    run.add_argument("--n", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--folds", type=int)
    run.add_argument("--c-const", type=float)
    run.add_argument("--mc-draws", type=int)
    run.add_argument("--perms", type=int)
    run.add_argument("--gamma", type=float)
    run.add_argument("--df", type=int, help="override the Logan-Tamhane degrees of freedom")
    run.add_argument("--no-small-sample", action="store_true", help="drop the n/(n-p) variance factor")
    run.add_argument("--methods", type=_methods, help=f"comma list from: {', '.join(harness.METHODS)}")
    run.add_argument("--out", type=Path, help="report path (default: stdout)")
    run.add_argument("--format", choices=("csv", "markdown"), default="csv")
    run.add_argument("--records", type=Path, help="per-replication CSV dump")
    run.add_argument("--jobs", type=int, default=1)

    sub.add_parser("validate", help="run the invariant suite on synthetic data")

    tables = sub.add_parser("tables", help="run every preset scenario and print the three tables")
    tables.add_argument("--reps", type=int, default=1000)
    tables.add_argument("--seed", type=int, default=harness.DEFAULT_SEED)
    tables.add_argument("--jobs", type=int, default=1)
    tables.add_argument("--out", type=Path)
    return p


_FLAG_FIELDS = {
    "study": "study",
    "scenario": "scenario",
    "n": "n",
    "reps": "replications",
    "seed": "base_seed",
    "folds": "v_folds",
    "c_const": "c_constant",
    "mc_draws": "mc_draws",
    "perms": "n_perm",
    "gamma": "gamma",
    "df": "df",
    "methods": "methods",
}


def config_from_args(args) -> harness.ScenarioConfig:
    fields = {}
    if args.config is not None:
        fields.update(harness.config_dict(harness.ScenarioConfig.from_json(args.config)))
        # presets filled in by the study default must not leak across a --study override
        if args.study is not None and args.study != fields["study"]:
            for key in ("n", "c_constant", "methods", "scenario"):
                fields.pop(key, None)
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            fields[name] = value
    if args.no_small_sample:
        fields["small_sample"] = False
    if "methods" in fields and fields["methods"] is not None:
        fields["methods"] = tuple(fields["methods"])
    return harness.ScenarioConfig(**fields)


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    log.info("running %s/%s with %d replications", cfg.study, cfg.scenario, cfg.replications)
    report = harness.run_scenario(cfg, jobs=args.jobs, keep_records=args.records is not None)
    if args.out is None:
        text = harness.report_to_csv(report) if args.format == "csv" else harness.report_to_markdown(report)
        sys.stdout.write(text)
    else:
        harness.emit_report(report, args.out, args.format)
    if args.records is not None:
        harness.write_records_csv(report, args.records)
    log.info("done in %.1fs", report.wall_clock)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_all

    results = run_all(verbose=True)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_RUNTIME


def run_tables(reps: int, seed: int, jobs: int = 1) -> tuple[dict, dict]:
    study1 = {}
    for name in dgp.STUDY1_SCENARIOS:
        cfg = harness.ScenarioConfig(study="study1", scenario=name, replications=reps, base_seed=seed)
        study1[name] = harness.run_scenario(cfg, jobs=jobs)
        log.info("study1 %s done in %.1fs", name, study1[name].wall_clock)
    study2 = {}
    for name in dgp.STUDY2_SCENARIOS:
        cfg = harness.ScenarioConfig(study="study2", scenario=name, replications=reps, base_seed=seed)
        study2[name] = harness.run_scenario(cfg, jobs=jobs)
        log.info("study2 %s done in %.1fs", name, study2[name].wall_clock)
    return study1, study2


def cmd_tables(args) -> int:
    study1, study2 = run_tables(args.reps, args.seed, args.jobs)
    _write(harness.tables_markdown(study1, study2), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"run": cmd_run, "validate": cmd_validate, "tables": cmd_tables}[args.command]
    try:
        return handler(args)
    except ConfigurationError as exc:
        print(f"stabcvtmle: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (harness.ReplicationError, OSError, ValueError) as exc:
        print(f"stabcvtmle: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
