"""Session loop, persistence/resume, reporting, comparison, and the CLI.

Sessions here run against tiny synthetic landscapes (or trivial shell
commands) so the whole module stays fast while exercising the real loop.
"""

import csv
import json
import logging
from pathlib import Path

import numpy as np
import pytest

from cfgtune import cli
from cfgtune.harness import TrialResult
from cfgtune.orchestrator import (
    COMPARE_COLUMNS,
    OrchestratorError,
    REPORT_COLUMNS,
    SearchHistory,
    compare,
    export_model,
    importance_from_log,
    load_log,
    report_from_log,
    run_session,
    summarize,
    write_compare_csv,
    write_report_csv,
)
from cfgtune.space import Objective, ObjectiveTerm, job_from_dict

PERF_MAX = Objective(terms=(ObjectiveTerm("perf", "maximize"),))

TIMING_KEYS = ("build_duration", "test_duration", "propose_seconds", "eval_seconds")

SMALL_SPACE_DOC = {
    "params": [
        {"name": "x", "kind": "continuous", "stage": "run", "range": [0.0, 1.0], "default": 0.5},
        {"name": "y", "kind": "continuous", "stage": "run", "range": [0.0, 1.0], "default": 0.5},
        {"name": "n", "kind": "integer", "stage": "run", "range": [0, 10], "default": 5},
        {"name": "mode", "kind": "categorical", "stage": "run",
         "choices": ["a", "b", "c"], "default": "a"},
    ]
}

SMALL_LANDSCAPE_DOC = {
    "bumps": [
        {"metric": "perf", "param": "x", "weight": 1.0, "best": 0.3, "width": 0.3},
        {"metric": "perf", "param": "mode", "weight": 0.5, "best": "c"},
    ],
    "crash_regions": [{"param": "y", "lo": 0.8, "hi": 1.0}],
    "noise_std": 0.0,
}


def small_job(strategy="random", iterations=10, seed=0, **extra):
    doc = {
        "space": SMALL_SPACE_DOC,
        "evaluator": {"type": "synthetic", "landscape": SMALL_LANDSCAPE_DOC},
        "objective": {"metric": "perf", "direction": "maximize"},
        "budget": {"iterations": iterations},
        "strategy": strategy,
        "seed": seed,
    }
    doc.update(extra)
    return job_from_dict(doc)


def trial_docs_without_timings(path):
    """Parsed log lines with wall-clock fields stripped, header first."""
    docs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    for doc in docs:
        for key in TIMING_KEYS:
            doc.pop(key, None)
    return docs


# ---------------------------------------------------------------------------
# run_session basics


def test_budget_of_ten_runs_exactly_ten_trials():
    report = run_session(small_job(iterations=10))
    assert report.iterations == 10
    assert len(report.objectives) == 10
    assert len(report.best_so_far) == 10
    assert len(report.crashed) == 10
    assert len(report.propose_seconds) == 10
    assert len(report.eval_seconds) == 10


def test_same_seed_gives_identical_histories():
    a = run_session(small_job(seed=7))
    b = run_session(small_job(seed=7))
    assert a.objectives == b.objectives
    assert a.crashed == b.crashed
    assert a.best_config == b.best_config
    c = run_session(small_job(seed=8))
    assert c.objectives != a.objectives


def test_seed_argument_overrides_job_seed():
    assert run_session(small_job(seed=1), seed=7).objectives == run_session(
        small_job(seed=7)
    ).objectives


def test_wall_clock_budget_stops_the_session():
    job = small_job()
    job = job_from_dict(
        dict(job.to_dict(), budget={"wall_clock_seconds": 0.2})
    )
    report = run_session(job)
    assert 1 <= report.iterations < 100_000


def test_best_so_far_is_running_max():
    report = run_session(small_job(iterations=30, seed=3))
    best = None
    for value, recorded in zip(report.objectives, report.best_so_far):
        if value is not None:
            best = value if best is None else max(best, value)
        assert recorded == best
    assert report.best_objective == best


def test_exhausted_strategy_ends_the_session_early():
    doc = {
        "space": {
            "params": [
                {"name": "a", "kind": "boolean", "stage": "run", "default": False},
                {"name": "b", "kind": "boolean", "stage": "run", "default": False},
            ]
        },
        "evaluator": {
            "type": "synthetic",
            "landscape": {
                "bumps": [{"metric": "perf", "param": "a", "weight": 1.0, "best": True}]
            },
        },
        "objective": {"metric": "perf", "direction": "maximize"},
        "budget": {"iterations": 10},
        "strategy": "grid",
    }
    report = run_session(job_from_dict(doc))
    assert report.iterations == 4  # the whole 2x2 grid, then a clean stop


def test_all_crash_session_reports_no_best():
    job_doc = {
        "space": SMALL_SPACE_DOC,
        "evaluator": {"type": "command", "test": "exit 1", "timeout": 5},
        "objective": {"metric": "value", "direction": "maximize"},
        "budget": {"iterations": 3},
        "strategy": "random",
    }
    report = run_session(job_from_dict(job_doc))
    assert report.iterations == 3
    assert report.best_objective is None
    assert report.best_config is None
    assert report.crash_rate == 1.0
    assert report.best_so_far == [None, None, None]


def test_deeptune_session_reports_importance():
    report = run_session(small_job("deeptune", iterations=30, seed=0))
    assert report.importance is not None
    names = [name for name, _ in report.importance]
    assert set(names) == {"x", "y", "n", "mode"}
    values = [v for _, v in report.importance]
    assert values == sorted(values, reverse=True)
    skipped = run_session(small_job("deeptune", iterations=5, seed=0))
    assert skipped.importance is None  # too few ran trials to rank


# ---------------------------------------------------------------------------
# reports


def test_summarize_window_one_equals_crash_indicator():
    history = SearchHistory(small_job().space, PERF_MAX)
    for i, crashed in enumerate([False, True, True, False]):
        if crashed:
            history.add(TrialResult(config={}, outcome="crashed", crash_reason="parse"))
        else:
            history.add(TrialResult(config={}, outcome="ran", metrics={"perf": float(i)}))
    report = summarize(history, window=1)
    assert report.crash_rate_windowed == [0.0, 1.0, 1.0, 0.0]


def test_smoothing_skips_crash_gaps_and_is_display_only():
    history = SearchHistory(small_job().space, PERF_MAX)
    history.add(TrialResult(config={}, outcome="ran", metrics={"perf": 1.0}))
    history.add(TrialResult(config={}, outcome="crashed", crash_reason="parse"))
    history.add(TrialResult(config={}, outcome="ran", metrics={"perf": 3.0}))
    report = summarize(history)
    assert report.smoothed_objective == [1.0, 1.0, 2.0]
    assert report.objectives == [1.0, None, 3.0]  # raw series untouched


def test_report_csv_columns_and_values(tmp_path):
    report = run_session(small_job(iterations=12, seed=5))
    path = tmp_path / "report.csv"
    write_report_csv(report, path)
    with open(path) as handle:
        rows = list(csv.reader(handle))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert len(rows) == 1 + 12
    for i, row in enumerate(rows[1:]):
        assert int(row[0]) == i
        assert row[3] in ("0", "1")
        if row[3] == "1":
            assert row[1] == ""  # crashed rows carry no objective
        else:
            assert float(row[1]) == report.objectives[i]
        assert float(row[2]) == report.best_so_far[i] if row[2] else True


def test_report_from_log_matches_live_report(tmp_path):
    path = tmp_path / "trials.jsonl"
    live = run_session(small_job(iterations=15, seed=2), log_path=path)
    loaded = report_from_log(path)
    assert loaded.objectives == live.objectives
    assert loaded.best_so_far == live.best_so_far
    assert loaded.crashed == live.crashed
    assert loaded.best_config == live.best_config
    assert loaded.strategy == live.strategy
    assert loaded.seed == live.seed
    assert loaded.fingerprint == live.fingerprint


# ---------------------------------------------------------------------------
# log format and recovery


def test_log_has_versioned_header_and_one_line_per_trial(tmp_path):
    path = tmp_path / "trials.jsonl"
    run_session(small_job(iterations=8, seed=1), log_path=path)
    header, docs = load_log(path)
    assert header["kind"] == "cfgtune-log"
    assert header["schema_version"] == 1
    assert header["seed"] == 1
    assert len(docs) == 8
    assert [d["iteration"] for d in docs] == list(range(8))


def test_same_seed_logs_identical_apart_from_timings(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_session(small_job(iterations=10, seed=4), log_path=a)
    run_session(small_job(iterations=10, seed=4), log_path=b)
    assert trial_docs_without_timings(a) == trial_docs_without_timings(b)


def test_resume_after_interruption_matches_uninterrupted_run(tmp_path):
    job = small_job(iterations=10, seed=6)
    full_path = tmp_path / "full.jsonl"
    full_report = run_session(job, log_path=full_path)

    # simulate a kill after 5 completed trials: keep header + 5 lines
    cut_path = tmp_path / "cut.jsonl"
    lines = full_path.read_text().splitlines(keepends=True)
    cut_path.write_text("".join(lines[:6]))

    resumed_report = run_session(job, log_path=cut_path, resume=True)
    assert resumed_report.iterations == 10
    assert resumed_report.objectives == full_report.objectives
    assert resumed_report.crashed == full_report.crashed
    assert trial_docs_without_timings(cut_path) == trial_docs_without_timings(full_path)


def test_resume_with_corrupt_final_line_truncates_and_warns(tmp_path, caplog):
    job = small_job(iterations=6, seed=9)
    path = tmp_path / "trials.jsonl"
    run_session(job, log_path=path)
    with open(path, "a") as handle:
        handle.write('{"iteration": 6, "outcome": "ra')  # interrupted write
    with caplog.at_level(logging.WARNING, logger="cfgtune.orchestrator"):
        header, docs = load_log(path)
    assert len(docs) == 6
    assert any("truncat" in rec.message for rec in caplog.records)
    # the file itself was repaired in place
    assert len(path.read_text().splitlines()) == 7


def test_corrupt_interior_line_is_an_error(tmp_path):
    path = tmp_path / "trials.jsonl"
    run_session(small_job(iterations=4), log_path=path)
    lines = path.read_text().splitlines()
    lines[2] = "definitely not json"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(OrchestratorError, match="line 3"):
        load_log(path)


def test_non_log_files_are_rejected(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(OrchestratorError, match="empty"):
        load_log(empty)
    other = tmp_path / "other.jsonl"
    other.write_text('{"kind": "something-else"}\n')
    with pytest.raises(OrchestratorError, match="not a trial log"):
        load_log(other)
    stale = tmp_path / "stale.jsonl"
    stale.write_text('{"kind": "cfgtune-log", "schema_version": 99}\n')
    with pytest.raises(OrchestratorError, match="version"):
        load_log(stale)


def test_resume_refuses_mismatched_job_and_prints_both_fingerprints(tmp_path):
    path = tmp_path / "trials.jsonl"
    logged_job = small_job(iterations=10, seed=0)
    run_session(logged_job, log_path=path)
    other_job = small_job("grid", iterations=10, seed=0)
    with pytest.raises(OrchestratorError) as err:
        run_session(other_job, log_path=path, resume=True)
    message = str(err.value)
    assert logged_job.fingerprint() in message
    assert other_job.fingerprint() in message


def test_resume_requires_a_log_path():
    with pytest.raises(OrchestratorError, match="log path"):
        run_session(small_job(), resume=True)


# ---------------------------------------------------------------------------
# compare


def test_compare_identical_random_jobs_give_identical_series():
    result = compare([small_job(), small_job()], seeds=[0, 1])
    series = [r for r in result.rows if r["row_type"] == "series"]
    first = [dict(r, job=None) for r in series if r["job"] == 0]
    second = [dict(r, job=None) for r in series if r["job"] == 1]
    assert first == second


def test_compare_row_count_is_jobs_by_seeds_by_iterations_plus_summaries():
    result = compare([small_job("random", 15), small_job("grid", 15)], seeds=[0, 1, 2])
    series = [r for r in result.rows if r["row_type"] == "series"]
    summaries = [r for r in result.rows if r["row_type"] == "summary"]
    assert len(series) == 2 * 3 * 15
    assert len(summaries) == 2


def test_compare_unreached_threshold_reports_budget_plus_one_sentinel():
    result = compare([small_job(iterations=8)], seeds=[0, 1], threshold=1e9)
    assert result.summaries[0].median_iterations_to_threshold == 9.0


def test_compare_default_threshold_is_lowest_median_final_best():
    result = compare([small_job("random", 12), small_job("grid", 12)], seeds=[0, 1])
    medians = [s.median_final_best for s in result.summaries]
    assert result.threshold == min(medians)


def test_compare_rejects_mismatched_jobs():
    with pytest.raises(OrchestratorError, match="space"):
        compare([small_job(), small_job(space={"params": SMALL_SPACE_DOC["params"][:2]})],
                seeds=[0])
    with pytest.raises(OrchestratorError, match="budget"):
        compare([small_job(iterations=5), small_job(iterations=6)], seeds=[0])
    noisy = dict(SMALL_LANDSCAPE_DOC, noise_std=0.5)
    with pytest.raises(OrchestratorError, match="evaluator"):
        compare(
            [small_job(), small_job(evaluator={"type": "synthetic", "landscape": noisy})],
            seeds=[0],
        )


def test_compare_parallel_equals_serial():
    jobs = [small_job("random", 10), small_job("grid", 10)]
    serial = compare(jobs, seeds=[0, 1], max_workers=1)
    parallel = compare(jobs, seeds=[0, 1], max_workers=2)
    assert serial.rows == parallel.rows
    assert serial.threshold == parallel.threshold


def test_compare_csv_round_trip(tmp_path):
    result = compare([small_job("random", 6), small_job("grid", 6)], seeds=[0])
    path = tmp_path / "cmp.csv"
    write_compare_csv(result, path)
    with open(path) as handle:
        rows = list(csv.DictReader(handle))
    assert set(rows[0]) == set(COMPARE_COLUMNS)
    assert len(rows) == len(result.rows)


# ---------------------------------------------------------------------------
# model export and offline importance


def test_export_model_round_trip(tmp_path):
    path = tmp_path / "trials.jsonl"
    run_session(small_job("deeptune", iterations=30, seed=0), log_path=path)
    doc = export_model(path)
    parsed = json.loads(doc)
    assert "layout_fingerprint" in parsed
    ranking = importance_from_log(path, doc)
    assert {name for name, _ in ranking} == {"x", "y", "n", "mode"}


def test_export_model_rejects_other_strategies(tmp_path):
    path = tmp_path / "trials.jsonl"
    run_session(small_job("random", iterations=5), log_path=path)
    with pytest.raises(OrchestratorError, match="deeptune"):
        export_model(path)


# ---------------------------------------------------------------------------
# CLI


def write_job_file(tmp_path, name="job.json", **kw):
    path = tmp_path / name
    path.write_text(json.dumps(small_job(**kw).to_dict()))
    return path


def test_cli_run_reports_and_writes_csv(tmp_path, capsys):
    job_path = write_job_file(tmp_path, iterations=8)
    csv_path = tmp_path / "out.csv"
    code = cli.main(["run", str(job_path), "--csv", str(csv_path), "--no-importance"])
    out = capsys.readouterr().out
    assert code == 0
    assert "best objective" in out
    assert csv_path.exists()


def test_cli_run_zero_budget_exits_two(tmp_path):
    job_path = write_job_file(tmp_path, iterations=0)
    assert cli.main(["run", str(job_path)]) == 2


def test_cli_run_bad_job_exits_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"strategy": "random"}')  # missing space/evaluator/...
    assert cli.main(["run", str(bad)]) == 1
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 1


def test_cli_run_rejects_resume_plus_log(tmp_path):
    job_path = write_job_file(tmp_path)
    code = cli.main(
        ["run", str(job_path), "--resume", str(tmp_path / "a"), "--log", str(tmp_path / "b")]
    )
    assert code == 1


def test_cli_report_and_exit_codes(tmp_path, capsys):
    job_path = write_job_file(tmp_path, iterations=6)
    log_path = tmp_path / "trials.jsonl"
    assert cli.main(["run", str(job_path), "--log", str(log_path), "--no-importance"]) == 0
    capsys.readouterr()
    assert cli.main(["report", str(log_path)]) == 0
    assert "iterations: 6" in capsys.readouterr().out

    header_only = tmp_path / "header.jsonl"
    header_only.write_text(log_path.read_text().splitlines(keepends=True)[0])
    assert cli.main(["report", str(header_only)]) == 2

    garbage = tmp_path / "garbage.jsonl"
    garbage.write_text("not json\n")
    assert cli.main(["report", str(garbage)]) == 1


def test_cli_compare_writes_csv(tmp_path, capsys):
    a = write_job_file(tmp_path, "a.json", strategy="random", iterations=6)
    b = write_job_file(tmp_path, "b.json", strategy="grid", iterations=6)
    csv_path = tmp_path / "cmp.csv"
    code = cli.main(["compare", str(a), str(b), "--seeds", "0,1", "--csv", str(csv_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "median final best" in out
    with open(csv_path) as handle:
        assert len(list(csv.DictReader(handle))) == 2 * 2 * 6 + 2


def test_cli_export_model_then_importance(tmp_path, capsys):
    job_path = write_job_file(tmp_path, strategy="deeptune", iterations=30)
    log_path = tmp_path / "trials.jsonl"
    assert cli.main(["run", str(job_path), "--log", str(log_path), "--no-importance"]) == 0
    model_path = tmp_path / "model.json"
    assert cli.main(["export-model", str(log_path), "-o", str(model_path)]) == 0
    assert model_path.exists()
    capsys.readouterr()
    assert cli.main(["importance", str(log_path), "--model", str(model_path)]) == 0
    out = capsys.readouterr().out
    assert "x\t" in out


PROBE_SCRIPT = """\
import sys

VALUES = {"swappiness": "60", "use_tcp": "1", "qdisc": "pfifo"}
RANGES = {"swappiness": (0, 200), "use_tcp": (0, 1)}

cmd, opt = sys.argv[1], sys.argv[2]
if opt not in VALUES:
    sys.exit(1)
if cmd == "read":
    print(VALUES[opt])
    sys.exit(0)
if cmd == "write":
    if opt not in RANGES:
        sys.exit(1)
    lo, hi = RANGES[opt]
    try:
        value = int(sys.argv[3])
    except ValueError:
        sys.exit(1)
    sys.exit(0 if lo <= value <= hi else 1)
sys.exit(1)
"""


def test_cli_infer_space_builds_space_file(tmp_path, capsys):
    probe = tmp_path / "probe.py"
    probe.write_text(PROBE_SCRIPT)
    options = tmp_path / "options.txt"
    options.write_text("swappiness\nuse_tcp\nqdisc\nmissing_opt\n")
    out_path = tmp_path / "space.json"
    code = cli.main(
        [
            "infer-space",
            "--probe-cmd",
            f"python3 {probe}",
            "--options",
            str(options),
            "-o",
            str(out_path),
        ]
    )
    assert code == 0
    doc = json.loads(out_path.read_text())
    params = {p["name"]: p for p in doc["space"]["params"]}
    assert params["use_tcp"]["kind"] == "boolean"
    assert params["swappiness"]["kind"] == "integer"
    assert "qdisc" not in params
    err = capsys.readouterr().err
    assert "qdisc" in err  # reported as excluded, non-numeric
    assert "missing_opt" in err  # reported as unreadable


def test_cli_infer_space_empty_options_exits_two(tmp_path):
    probe = tmp_path / "probe.py"
    probe.write_text(PROBE_SCRIPT)
    options = tmp_path / "options.txt"
    options.write_text("# nothing but comments\n")
    code = cli.main(
        ["infer-space", "--probe-cmd", f"python3 {probe}", "--options", str(options)]
    )
    assert code == 2
