"""The evaluate-train-select loop, trial persistence, and session reporting.

A session repeatedly asks its strategy for a configuration, evaluates it,
appends the result to a JSONL log, and feeds it back to the strategy.  Logs
are append-only and carry a fingerprint of the job they belong to; resuming
replays the logged trials through a freshly built strategy, which reproduces
the strategy's internal state (including random-stream positions) exactly,
so an interrupted run continues as if it had never stopped.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .deeptune import feature_importance
from .harness import (
    SyntheticEvaluator,
    TrialResult,
    make_evaluator,
    objective_value,
    update_metric_stats,
)
from .space import ConfigSpace, EncodingLayout, JobSpec, config_key, job_from_dict
from .space import SpaceExhausted
from .strategies import DeepTuneStrategy, make_strategy

log = logging.getLogger(__name__)

LOG_KIND = "cfgtune-log"
LOG_SCHEMA_VERSION = 1

CRASH_RATE_WINDOW = 25
SMOOTH_WINDOW = 10

# Keys carrying wall-clock measurements; excluded from determinism comparisons.
TIMING_KEYS = ("build_duration", "test_duration", "propose_seconds", "eval_seconds")


class OrchestratorError(RuntimeError):
    """Log/job mismatch or other unrecoverable session-level problem."""


class SearchHistory:
    """Everything observed so far in one session."""

    def __init__(self, space: ConfigSpace, objective):
        self.space = space
        self.objective = objective
        self.trials: list[TrialResult] = []
        self.objectives: list[float | None] = []
        self.best_so_far: list[float | None] = []
        self.metric_stats: dict[str, tuple[float, float]] = {}
        self.best_index: int | None = None

    def __len__(self) -> int:
        return len(self.trials)

    def add(self, result: TrialResult) -> float | None:
        """Record a trial; returns its objective value (None when crashed)."""
        value: float | None = None
        if not result.crashed:
            update_metric_stats(self.metric_stats, result.metrics)
            value = objective_value(result, self.objective, self.metric_stats)
        self.trials.append(result)
        self.objectives.append(value)
        best = self.best_so_far[-1] if self.best_so_far else None
        if value is not None and (best is None or value > best):
            best = value
            self.best_index = len(self.trials) - 1
        self.best_so_far.append(best)
        return value

    @property
    def best_value(self) -> float | None:
        return self.best_so_far[-1] if self.best_so_far else None

    @property
    def best_config(self) -> dict[str, Any] | None:
        return None if self.best_index is None else self.trials[self.best_index].config

    def crash_indicators(self) -> list[bool]:
        return [t.crashed for t in self.trials]


@dataclass
class SessionReport:
    """Summary of one session, plus the per-iteration series behind it."""

    fingerprint: str
    seed: int
    strategy: str
    iterations: int
    best_objective: float | None
    best_config: dict[str, Any] | None
    best_iteration: int | None
    objectives: list[float | None]
    best_so_far: list[float | None]
    crashed: list[bool]
    crash_rate: float
    crash_rate_windowed: list[float]
    smoothed_objective: list[float | None]
    propose_seconds: list[float]
    eval_seconds: list[float]
    importance: list[tuple[str, float]] | None = None


def _windowed_crash_rate(crashed: Sequence[bool], window: int) -> list[float]:
    out = []
    for i in range(len(crashed)):
        chunk = crashed[max(0, i + 1 - window) : i + 1]
        out.append(sum(chunk) / len(chunk))
    return out


def _smoothed(values: Sequence[float | None], window: int) -> list[float | None]:
    """Trailing moving average for display; gaps (crashes) are skipped."""
    out: list[float | None] = []
    for i in range(len(values)):
        chunk = [v for v in values[max(0, i + 1 - window) : i + 1] if v is not None]
        out.append(sum(chunk) / len(chunk) if chunk else None)
    return out


def summarize(
    history: SearchHistory,
    *,
    fingerprint: str = "",
    seed: int = 0,
    strategy: str = "",
    propose_seconds: Sequence[float] = (),
    eval_seconds: Sequence[float] = (),
    window: int = CRASH_RATE_WINDOW,
    smooth_window: int = SMOOTH_WINDOW,
    importance: list[tuple[str, float]] | None = None,
) -> SessionReport:
    """Build a SessionReport from a history.

    ``window`` controls the trailing crash-rate column; smoothing applies
    only to the display series, never to the stored per-iteration data.
    """
    crashed = history.crash_indicators()
    n = len(crashed)
    return SessionReport(
        fingerprint=fingerprint,
        seed=seed,
        strategy=strategy,
        iterations=n,
        best_objective=history.best_value,
        best_config=history.best_config,
        best_iteration=history.best_index,
        objectives=list(history.objectives),
        best_so_far=list(history.best_so_far),
        crashed=crashed,
        crash_rate=sum(crashed) / n if n else 0.0,
        crash_rate_windowed=_windowed_crash_rate(crashed, window),
        smoothed_objective=_smoothed(history.objectives, smooth_window),
        propose_seconds=list(propose_seconds),
        eval_seconds=list(eval_seconds),
        importance=importance,
    )


REPORT_COLUMNS = (
    "iteration",
    "objective",
    "best_so_far",
    "crashed",
    "crash_rate_windowed",
    "propose_seconds",
    "eval_seconds",
)


def write_report_csv(report: SessionReport, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(REPORT_COLUMNS)
        for i in range(report.iterations):
            writer.writerow(
                [
                    i,
                    "" if report.objectives[i] is None else repr(report.objectives[i]),
                    "" if report.best_so_far[i] is None else repr(report.best_so_far[i]),
                    int(report.crashed[i]),
                    repr(report.crash_rate_windowed[i]),
                    repr(report.propose_seconds[i]) if i < len(report.propose_seconds) else "",
                    repr(report.eval_seconds[i]) if i < len(report.eval_seconds) else "",
                ]
            )


# ---------------------------------------------------------------------------
# Trial logs


def _trial_line(
    iteration: int, result: TrialResult, objective: float | None, best: float | None,
    propose_s: float, eval_s: float,
) -> str:
    doc = {
        "iteration": iteration,
        "objective": objective,
        "best_so_far": best,
        "propose_seconds": propose_s,
        "eval_seconds": eval_s,
        **result.to_dict(),
    }
    return json.dumps(doc, sort_keys=True)


def load_log(path: str | Path) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """Read a trial log: (header, trial documents).

    A corrupt final line (interrupted write) is truncated away with a
    warning; corruption anywhere else is an error.
    """
    path = Path(path)
    raw = path.read_text()
    lines = raw.splitlines(keepends=True)
    if not lines:
        raise OrchestratorError(f"{path} is empty, not a trial log")
    parsed: list[dict[str, Any]] = []
    offset = 0
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            offset += len(line)
            continue
        try:
            parsed.append(json.loads(stripped))
            offset += len(line)
        except json.JSONDecodeError as exc:
            if i == len(lines) - 1:
                log.warning(
                    "truncating corrupt final log line in %s (%s)", path, exc
                )
                path.write_text(raw[:offset])
                break
            raise OrchestratorError(
                f"{path}: corrupt log line {i + 1} (only the final line may be truncated)"
            ) from exc
    if not parsed:
        raise OrchestratorError(f"{path} contains no parseable header line")
    header = parsed[0]
    if header.get("kind") != LOG_KIND:
        raise OrchestratorError(f"{path} is not a trial log (missing kind header)")
    if header.get("schema_version") != LOG_SCHEMA_VERSION:
        raise OrchestratorError(
            f"{path}: unsupported log schema version {header.get('schema_version')!r}"
        )
    return header, parsed[1:]


class _LogWriter:
    def __init__(self, path: str | Path, header: dict[str, Any] | None, append: bool):
        self.handle = open(path, "a" if append else "w")
        if header is not None:
            self.write_line(json.dumps(header, sort_keys=True))

    def write_line(self, line: str) -> None:
        self.handle.write(line + "\n")
        self.handle.flush()

    def close(self) -> None:
        self.handle.close()


# ---------------------------------------------------------------------------
# Sessions


def _build_session(job: JobSpec, seed: int):
    """Construct the (strategy, evaluator, history, eval_rng) tuple for a job."""
    root = np.random.SeedSequence(seed)
    strat_ss, eval_ss, analysis_ss = root.spawn(3)
    warm_doc = None
    if job.warm_start:
        warm_doc = Path(job.warm_start).read_text()
    strategy = make_strategy(
        job.strategy,
        job.space,
        job.objective,
        np.random.default_rng(strat_ss),
        job.strategy_params,
        warm_doc=warm_doc,
    )
    evaluator = make_evaluator(job.evaluator, job.space)
    history = SearchHistory(job.space, job.objective)
    return strategy, evaluator, history, np.random.default_rng(eval_ss), analysis_ss


def _replay(job: JobSpec, strategy, evaluator, history: SearchHistory, eval_rng, docs):
    """Re-drive a strategy through logged trials so its state matches the log.

    Proposals are recomputed (advancing every random stream exactly as the
    original run did) and checked against the logged configurations; the
    logged results are then observed.  Synthetic evaluators are re-queried
    to advance the evaluation stream; their results must match the log.
    """
    prev_config = None
    for i, doc in enumerate(docs):
        result = TrialResult.from_dict(doc)
        proposal = strategy.propose(history.trials)
        if config_key(job.space, proposal) != config_key(job.space, result.config):
            raise OrchestratorError(
                f"replay diverged at iteration {i}: the log does not match this job/seed"
            )
        if isinstance(evaluator, SyntheticEvaluator):
            replayed = evaluator.evaluate(proposal, prev_config, eval_rng)
            if replayed.to_dict() != result.to_dict():
                log.warning("replayed result differs from log at iteration %d", i)
        history.add(result)
        strategy.observe(result)
        prev_config = result.config
    return prev_config


def run_session(
    job: JobSpec,
    *,
    log_path: str | Path | None = None,
    resume: bool = False,
    seed: int | None = None,
    compute_importance: bool = True,
) -> SessionReport:
    """Run (or resume) one tuning session to its budget; returns the report.

    ``seed`` overrides the job's seed.  With ``resume`` the log at
    ``log_path`` is loaded, its fingerprint checked against the job, its
    trials replayed, and the session continues appending to the same file.
    """
    if seed is not None:
        job = replace(job, seed=seed)
    fingerprint = job.fingerprint()
    strategy, evaluator, history, eval_rng, analysis_ss = _build_session(job, job.seed)

    propose_seconds: list[float] = []
    eval_seconds: list[float] = []
    writer = None
    prev_config = None
    if resume:
        if log_path is None:
            raise OrchestratorError("resume needs the log path")
        header, docs = load_log(log_path)
        if header.get("fingerprint") != fingerprint:
            raise OrchestratorError(
                "log fingerprint does not match this job: log has "
                f"{header.get('fingerprint')}, job is {fingerprint}"
            )
        prev_config = _replay(job, strategy, evaluator, history, eval_rng, docs)
        for doc in docs:
            propose_seconds.append(doc.get("propose_seconds", 0.0))
            eval_seconds.append(doc.get("eval_seconds", 0.0))
        writer = _LogWriter(log_path, header=None, append=True)
    elif log_path is not None:
        header = {
            "kind": LOG_KIND,
            "schema_version": LOG_SCHEMA_VERSION,
            "fingerprint": fingerprint,
            "seed": job.seed,
            "job": job.to_dict(),
        }
        writer = _LogWriter(log_path, header=header, append=False)

    budget = job.budget
    started = time.monotonic()
    try:
        while True:
            if budget.iterations is not None and len(history) >= budget.iterations:
                break
            if (
                budget.wall_clock_seconds is not None
                and time.monotonic() - started >= budget.wall_clock_seconds
            ):
                break
            t0 = time.perf_counter()
            try:
                config = strategy.propose(history.trials)
            except SpaceExhausted as exc:
                log.info("stopping early: %s", exc)
                break
            t1 = time.perf_counter()
            result = evaluator.evaluate(config, prev_config, eval_rng)
            t2 = time.perf_counter()
            value = history.add(result)
            propose_seconds.append(t1 - t0)
            eval_seconds.append(t2 - t1)
            if writer is not None:
                writer.write_line(
                    _trial_line(
                        len(history) - 1, result, value, history.best_value, t1 - t0, t2 - t1
                    )
                )
            strategy.observe(result)
            prev_config = result.config
    finally:
        if writer is not None:
            writer.close()

    importance = None
    if compute_importance and isinstance(strategy, DeepTuneStrategy):
        importance = _strategy_importance(strategy, analysis_ss)
    return summarize(
        history,
        fingerprint=fingerprint,
        seed=job.seed,
        strategy=job.strategy,
        propose_seconds=propose_seconds,
        eval_seconds=eval_seconds,
        importance=importance,
    )


def _strategy_importance(strategy: DeepTuneStrategy, analysis_ss) -> list | None:
    """Permutation importance from a strategy's accumulated ran trials."""
    ran_idx = [i for i, t in enumerate(strategy.trials) if not t.crashed]
    if len(ran_idx) < 20:
        return None
    if len(strategy.trials) > strategy._trained_count:
        from . import deeptune

        deeptune.train(strategy.model, strategy._training_set())
        strategy._trained_count = len(strategy.trials)
    inputs = np.stack([strategy.encoded_rows[i] for i in ran_idx])
    objectives = np.array([strategy._objective_of(strategy.trials[i]) for i in ran_idx])
    return feature_importance(
        strategy.model, inputs, objectives, np.random.default_rng(analysis_ss)
    )


def report_from_log(path: str | Path, window: int = CRASH_RATE_WINDOW) -> SessionReport:
    """Rebuild a report from a trial log without re-running anything."""
    header, docs = load_log(path)
    job = job_from_dict(header["job"])
    history = SearchHistory(job.space, job.objective)
    propose_seconds = []
    eval_seconds = []
    for doc in docs:
        history.add(TrialResult.from_dict(doc))
        propose_seconds.append(doc.get("propose_seconds", 0.0))
        eval_seconds.append(doc.get("eval_seconds", 0.0))
    return summarize(
        history,
        fingerprint=header.get("fingerprint", ""),
        seed=header.get("seed", 0),
        strategy=job.strategy,
        propose_seconds=propose_seconds,
        eval_seconds=eval_seconds,
        window=window,
    )


# ---------------------------------------------------------------------------
# Cross-strategy comparison


@dataclass
class StrategySummary:
    strategy: str
    median_final_best: float | None
    median_iterations_to_threshold: float | None
    crash_rate_quartiles: tuple[float, float, float, float]


@dataclass
class ComparisonResult:
    rows: list[dict[str, Any]]
    summaries: list[StrategySummary]
    threshold: float | None


COMPARE_COLUMNS = (
    "row_type",
    "job",
    "strategy",
    "seed",
    "iteration",
    "objective",
    "best_so_far",
    "crashed",
    "median_final_best",
    "median_iterations_to_threshold",
    "crash_q1",
    "crash_q2",
    "crash_q3",
    "crash_q4",
)


def compare(
    jobs: Sequence[JobSpec],
    seeds: Sequence[int],
    *,
    threshold: float | None = None,
    max_workers: int = 1,
) -> ComparisonResult:
    """Run every job at every seed and tabulate series plus per-strategy summaries.

    Jobs must differ only in strategy (same space/evaluator/objective/budget).
    ``threshold`` is the objective level used for iterations-to-threshold;
    when omitted it defaults to the lowest median final best across
    strategies, a bar every strategy reaches in at least half its seeds.
    Runs that never reach it report budget+1 as a sentinel.
    """
    if not jobs or not seeds:
        raise OrchestratorError("compare needs at least one job and one seed")
    base = jobs[0]
    base_layout = EncodingLayout(base.space).fingerprint()
    for job in jobs[1:]:
        if EncodingLayout(job.space).fingerprint() != base_layout:
            raise OrchestratorError("compare jobs have mismatched spaces")
        if job.evaluator != base.evaluator or job.budget != base.budget:
            raise OrchestratorError("compare jobs must share evaluator and budget")
        if job.objective != base.objective:
            raise OrchestratorError("compare jobs must share the objective")

    tasks = [(idx, job, seed) for idx, job in enumerate(jobs) for seed in seeds]

    def _run(task):
        _, job, seed = task
        return run_session(job, seed=seed, compute_importance=False)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            reports = list(pool.map(_run, tasks))
    else:
        reports = [_run(t) for t in tasks]

    by_job: list[list[SessionReport]] = [[] for _ in jobs]
    rows: list[dict[str, Any]] = []
    for (idx, job, seed), rep in zip(tasks, reports):
        by_job[idx].append(rep)
        for i in range(rep.iterations):
            rows.append(
                {
                    "row_type": "series",
                    "job": idx,
                    "strategy": job.strategy,
                    "seed": seed,
                    "iteration": i,
                    "objective": rep.objectives[i],
                    "best_so_far": rep.best_so_far[i],
                    "crashed": int(rep.crashed[i]),
                }
            )

    def _median_final(reps: list[SessionReport]) -> float | None:
        finals = [r.best_objective for r in reps if r.best_objective is not None]
        return float(np.median(finals)) if finals else None

    if threshold is None:
        medians = [m for m in (_median_final(reps) for reps in by_job) if m is not None]
        threshold = min(medians) if medians else None

    budget_iters = base.budget.iterations
    summaries = []
    for idx, job in enumerate(jobs):
        name = job.strategy
        reps = by_job[idx]
        iters_to = []
        for rep in reps:
            sentinel = (budget_iters or rep.iterations) + 1
            hit = sentinel
            if threshold is not None:
                for i, best in enumerate(rep.best_so_far):
                    if best is not None and best >= threshold:
                        hit = i + 1  # iterations are counted from 1 here
                        break
            iters_to.append(hit)
        per_rep_quarters = []
        for rep in reps:
            arr = np.array(rep.crashed, dtype=float)
            per_rep_quarters.append([chunk.mean() if len(chunk) else 0.0 for chunk in np.array_split(arr, 4)])
        quartiles = (
            tuple(float(q) for q in np.mean(per_rep_quarters, axis=0))
            if per_rep_quarters
            else (0.0, 0.0, 0.0, 0.0)
        )
        summaries.append(
            StrategySummary(
                strategy=name,
                median_final_best=_median_final(reps),
                median_iterations_to_threshold=float(np.median(iters_to)) if iters_to else None,
                crash_rate_quartiles=quartiles,
            )
        )
        rows.append(
            {
                "row_type": "summary",
                "job": idx,
                "strategy": name,
                "median_final_best": summaries[-1].median_final_best,
                "median_iterations_to_threshold": summaries[-1].median_iterations_to_threshold,
                "crash_q1": quartiles[0],
                "crash_q2": quartiles[1],
                "crash_q3": quartiles[2],
                "crash_q4": quartiles[3],
            }
        )
    return ComparisonResult(rows=rows, summaries=summaries, threshold=threshold)


def write_compare_csv(result: ComparisonResult, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=COMPARE_COLUMNS, restval="")
        writer.writeheader()
        for row in result.rows:
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Model export / offline analysis from logs


def rebuild_from_log(log_path: str | Path) -> tuple[JobSpec, Any, SearchHistory]:
    """Reconstruct the job and a fully replayed strategy from a log."""
    header, docs = load_log(log_path)
    job = job_from_dict(header["job"])
    if header.get("fingerprint") != job.fingerprint():
        raise OrchestratorError(
            f"{log_path}: header fingerprint does not match its embedded job"
        )
    strategy, evaluator, history, eval_rng, _ = _build_session(job, job.seed)
    _replay(job, strategy, evaluator, history, eval_rng, docs)
    return job, strategy, history


def export_model(log_path: str | Path) -> str:
    """Replay a deeptune session's log and serialize the resulting model."""
    from . import deeptune as dt

    job, strategy, history = rebuild_from_log(log_path)
    if not isinstance(strategy, DeepTuneStrategy):
        raise OrchestratorError(
            f"log was produced by strategy {job.strategy!r}; only deeptune models can be exported"
        )
    if len(history) == 0:
        raise OrchestratorError("log contains no trials; nothing to export")
    if len(strategy.trials) > strategy._trained_count:
        dt.train(strategy.model, strategy._training_set())
        strategy._trained_count = len(strategy.trials)
    return dt.save_model(strategy.model)


def importance_from_log(log_path: str | Path, model_doc: str) -> list[tuple[str, float]]:
    """Permutation importance of a saved model against a log's ran trials."""
    from .deeptune import warm_start

    header, docs = load_log(log_path)
    job = job_from_dict(header["job"])
    layout = EncodingLayout(job.space)
    model = warm_start(model_doc, layout)
    history = SearchHistory(job.space, job.objective)
    for doc in docs:
        history.add(TrialResult.from_dict(doc))
    ran = [(t.config, v) for t, v in zip(history.trials, history.objectives) if v is not None]
    if not ran:
        raise OrchestratorError("log contains no ran trials")
    inputs = layout.encode_batch([c for c, _ in ran])
    objectives = np.array([v for _, v in ran])
    return feature_importance(model, inputs, objectives, np.random.default_rng(0))
