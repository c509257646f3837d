import json
import math

import numpy as np
import pytest

from stabcvtmle import harness
from stabcvtmle.errors import ConfigurationError
from stabcvtmle.streams import stream

QUICK = dict(mc_draws=1000, n_perm=999)


def test_config_defaults_per_study():
    s1 = harness.ScenarioConfig()
    assert (s1.n, s1.c_constant, s1.replications, s1.base_seed, s1.gamma, s1.v_folds) == (50, 0.25, 1000, 202701, 0.025, 10)
    assert s1.methods == harness.METHODS
    s2 = harness.ScenarioConfig(study="study2", scenario="global_null")
    assert (s2.n, s2.c_constant) == (60, 2.0)
    assert s2.methods == ("obrien_ranksum", "stab_cvtmle")


@pytest.mark.parametrize(
    "kwargs,match",
    [
        ({"scenario": "S7"}, "S1, S2, S3, S4"),
        ({"study": "study2", "scenario": "S1"}, "global_null, calibrated_alternative"),
        ({"study": "study3"}, "study1, study2"),
        ({"replications": 0}, "replications"),
        ({"gamma": 0.5}, "gamma"),
        ({"methods": ("holm", "bonferroni")}, "bonferroni"),
    ],
)
def test_config_validation(kwargs, match):
    with pytest.raises(ConfigurationError, match=match):
        harness.ScenarioConfig(**kwargs)


def test_config_from_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"study": "study1", "scenario": "S3", "replications": 7, "methods": ["holm"]}))
    cfg = harness.ScenarioConfig.from_json(path)
    assert cfg.scenario == "S3" and cfg.replications == 7 and cfg.methods == ("holm",)
    path.write_text(json.dumps({"colour": "blue"}))
    with pytest.raises(ConfigurationError, match="colour"):
        harness.ScenarioConfig.from_json(path)


def test_streams_distinct_and_reproducible():
    a = stream(1, 0, "data").random(5)
    assert np.array_equal(a, stream(1, 0, "data").random(5))
    assert not np.array_equal(a, stream(1, 1, "data").random(5))
    assert not np.array_equal(a, stream(1, 0, "cvtmle").random(5))
    with pytest.raises(ValueError):
        stream(1, 0, "nonsense")


def test_single_replication_report_equals_record():
    cfg = harness.ScenarioConfig(scenario="S2", replications=1, **QUICK)
    rec = harness.run_replication(cfg, 0)
    rep = harness.run_scenario(cfg)
    assert rep.rejections == {m: int(v) for m, v in rec.rejects.items()}
    assert rep.mean_weights == rec.mean_weights


def test_results_do_not_depend_on_worker_count():
    cfg = harness.ScenarioConfig(scenario="S4", replications=8, **QUICK)
    one = harness.run_scenario(cfg, jobs=1, keep_records=True)
    three = harness.run_scenario(cfg, jobs=3, keep_records=True)
    assert one.rejections == three.rejections
    assert one.mean_weights == three.mean_weights
    assert [r.replication for r in three.records] == list(range(8))


def test_weights_on_simplex_and_se():
    cfg = harness.ScenarioConfig(study="study2", scenario="calibrated_alternative", replications=6, **QUICK)
    rep = harness.run_scenario(cfg)
    w = np.asarray(rep.mean_weights)
    assert (w >= 0).all() and abs(w.sum() - 1) <= 1e-9
    for m in rep.methods:
        p = rep.rate(m)
        assert 0 <= p <= 1
        assert rep.se(m) == pytest.approx(math.sqrt(p * (1 - p) / 6))


def test_replication_failure_reports_index(monkeypatch):
    def boom(*args, **kwargs):
        raise ValueError("bad draw")

    monkeypatch.setattr(harness.dgp, "gen_study1", boom)
    with pytest.raises(harness.ReplicationError, match="replication 0 failed"):
        harness.run_scenario(harness.ScenarioConfig(replications=2, **QUICK))


# serialization ---------------------------------------------------------------------


def _report(methods=("holm", "stab_cvtmle"), weights=(0.7, 0.3)):
    return harness.ScenarioReport(
        study="study1",
        scenario="S4",
        replications=1000,
        methods=methods,
        rejections={m: 123 + i for i, m in enumerate(methods)},
        mean_weights=weights,
    )


def test_csv_round_trip():
    rep = _report(weights=(0.1 + 0.2, 1 - (0.1 + 0.2)))
    back = harness.report_from_csv(harness.report_to_csv(rep))
    assert back.rejections == rep.rejections and back.mean_weights == rep.mean_weights
    assert back.methods == rep.methods and back.replications == rep.replications
    assert [back.rate(m) for m in back.methods] == [rep.rate(m) for m in rep.methods]


def test_empty_methods_gives_header_only(tmp_path):
    rep = _report(methods=(), weights=None)
    path = tmp_path / "r.csv"
    harness.emit_report(rep, path, "csv")
    assert path.read_text().strip() == ",".join(harness.CSV_FIELDS)


def test_markdown_three_decimals(tmp_path):
    path = tmp_path / "r.md"
    harness.emit_report(_report(), path, "markdown")
    text = path.read_text()
    assert "| 0.123 | 0.124 | 0.700 | 0.300 |" in text


def test_emit_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    harness.emit_report(_report(), a)
    harness.emit_report(_report(), b)
    assert a.read_bytes() == b.read_bytes()


def test_emit_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        harness.emit_report(_report(), tmp_path / "x", "xml")


def test_emit_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        harness.emit_report(_report(), tmp_path / "missing" / "r.csv")


def test_records_dump(tmp_path):
    cfg = harness.ScenarioConfig(scenario="S1", replications=3, methods=("holm", "stab_cvtmle"), **QUICK)
    rep = harness.run_scenario(cfg, keep_records=True)
    path = tmp_path / "rec.csv"
    harness.write_records_csv(rep, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "replication,holm,stab_cvtmle,alpha_1,alpha_2"
    assert len(lines) == 4


def test_tables_layout():
    s1 = {name: _report(methods=harness.METHODS) for name in ("S1", "S2")}
    s2 = {"global_null": _report(methods=("obrien_ranksum", "stab_cvtmle"))}
    text = harness.tables_markdown(s1, s2)
    assert "Table 1" in text and "Table 2" in text and "Table 3" in text
    assert "| S2 | (1, 0) | 0.123 | 0.124 | 0.125 | 0.126 | 0.127 |" in text
    assert "| global_null | Type I error rate | 0.123 | 0.124 |" in text
