"""Command-line entry points.

Subcommands:

* ``run``          -- execute a tuning session described by a job file
* ``report``       -- summarize a trial log without re-running anything
* ``compare``      -- run several strategies over shared seeds and tabulate
* ``importance``   -- rank parameters of a saved model against a trial log
* ``infer-space``  -- probe a live target to discover tunable options
* ``export-model`` -- replay a deeptune log and save the trained model

Exit codes: 0 on success, 1 on configuration or input errors, 2 when a
command completed but produced no results (zero-trial budget, empty log,
nothing inferable).
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import subprocess
import sys
from pathlib import Path

from .deeptune import DeepTuneError
from .harness import HarnessError
from .nn import NNError
from .orchestrator import (
    OrchestratorError,
    compare,
    export_model,
    importance_from_log,
    report_from_log,
    run_session,
    write_compare_csv,
    write_report_csv,
)
from .space import JobSyntaxError, SpaceError, infer_space, parse_job

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EMPTY = 2

PROBE_TIMEOUT_S = 30.0

_USAGE_ERRORS = (
    SpaceError,
    JobSyntaxError,
    DeepTuneError,
    HarnessError,
    NNError,
    OrchestratorError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
)


class CommandProbe:
    """Probe protocol adapter that shells out to a user-supplied command.

    ``<cmd> read <option>`` must print the option's current value on stdout
    and exit 0; ``<cmd> write <option> <value>`` must exit 0 if and only if
    the target accepted the value.
    """

    def __init__(self, command: str, timeout_s: float = PROBE_TIMEOUT_S):
        self.command = command
        self.timeout_s = timeout_s

    def read(self, option: str) -> str:
        proc = subprocess.run(
            f"{self.command} read {shlex.quote(option)}",
            shell=True,
            capture_output=True,
            text=True,
            timeout=self.timeout_s,
        )
        if proc.returncode != 0:
            raise RuntimeError(
                f"probe read failed with exit {proc.returncode}: {proc.stderr.strip()}"
            )
        return proc.stdout.strip()

    def write(self, option: str, value) -> bool:
        try:
            proc = subprocess.run(
                f"{self.command} write {shlex.quote(option)} {shlex.quote(str(value))}",
                shell=True,
                capture_output=True,
                text=True,
                timeout=self.timeout_s,
            )
        except subprocess.TimeoutExpired:
            return False
        return proc.returncode == 0


def _print_report(report) -> None:
    crashes = sum(report.crashed)
    print(f"strategy: {report.strategy}")
    print(f"seed: {report.seed}")
    print(
        f"iterations: {report.iterations} "
        f"({crashes} crashed, rate {report.crash_rate:.3f})"
    )
    if report.best_objective is None:
        print("best objective: none (no trial completed)")
    else:
        print(
            f"best objective: {report.best_objective:.6g} "
            f"at iteration {report.best_iteration}"
        )
        print(f"best config: {json.dumps(report.best_config, sort_keys=True)}")
    if report.importance:
        print("top parameters by importance:")
        for name, value in report.importance[:10]:
            print(f"  {name}: {value:.4f}")


def _cmd_run(args) -> int:
    job = parse_job(Path(args.job).read_text())
    if args.resume is not None and args.log is not None:
        raise OrchestratorError("--resume already names the log; do not also pass --log")
    log_path = args.resume if args.resume is not None else args.log
    report = run_session(
        job,
        log_path=log_path,
        resume=args.resume is not None,
        seed=args.seed,
        compute_importance=not args.no_importance,
    )
    if report.iterations == 0:
        print("no trials were run (zero budget?)", file=sys.stderr)
        return EXIT_EMPTY
    _print_report(report)
    if args.csv is not None:
        write_report_csv(report, args.csv)
    return EXIT_OK


def _cmd_report(args) -> int:
    report = report_from_log(args.log, window=args.window)
    if report.iterations == 0:
        print("log contains no trials", file=sys.stderr)
        return EXIT_EMPTY
    _print_report(report)
    if args.csv is not None:
        write_report_csv(report, args.csv)
    return EXIT_OK


def _cmd_compare(args) -> int:
    jobs = [parse_job(Path(p).read_text()) for p in args.jobs]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    result = compare(
        jobs, seeds, threshold=args.threshold, max_workers=args.workers
    )
    if not any(row["row_type"] == "series" for row in result.rows):
        print("no trials were run (zero budget?)", file=sys.stderr)
        return EXIT_EMPTY
    if result.threshold is not None:
        print(f"threshold: {result.threshold:.6g}")
    for s in result.summaries:
        best = "none" if s.median_final_best is None else f"{s.median_final_best:.6g}"
        to_thr = (
            "none"
            if s.median_iterations_to_threshold is None
            else f"{s.median_iterations_to_threshold:g}"
        )
        quartiles = ", ".join(f"{q:.3f}" for q in s.crash_rate_quartiles)
        print(
            f"{s.strategy}: median final best {best}, "
            f"median iterations to threshold {to_thr}, "
            f"crash rate by quarter [{quartiles}]"
        )
    if args.csv is not None:
        write_compare_csv(result, args.csv)
    return EXIT_OK


def _cmd_importance(args) -> int:
    ranking = importance_from_log(args.log, Path(args.model).read_text())
    for name, value in ranking:
        print(f"{name}\t{value:.6f}")
    return EXIT_OK


def _cmd_infer_space(args) -> int:
    lines = Path(args.options).read_text().splitlines()
    options = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    if not options:
        print("options file lists no options", file=sys.stderr)
        return EXIT_EMPTY
    result = infer_space(CommandProbe(args.probe_cmd), options)
    for name, value in result.non_numeric:
        print(f"excluded non-numeric option {name} (value {value!r})", file=sys.stderr)
    for name in result.unreadable:
        print(f"skipped unreadable option {name}", file=sys.stderr)
    if result.space is None:
        print("no tunable numeric options found", file=sys.stderr)
        return EXIT_EMPTY
    doc = json.dumps({"space": result.space.to_dict()}, indent=2, sort_keys=True)
    if args.output is not None:
        Path(args.output).write_text(doc + "\n")
        print(f"wrote space with {len(result.space.params)} parameters to {args.output}")
    else:
        print(doc)
    return EXIT_OK


def _cmd_export_model(args) -> int:
    doc = export_model(args.log)
    Path(args.output).write_text(doc)
    print(f"wrote model to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfgtune",
        description="Crash-aware black-box tuning of typed configuration spaces.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a tuning session from a job file")
    p_run.add_argument("job", help="job file (YAML or JSON)")
    p_run.add_argument("--seed", type=int, default=None, help="override the job seed")
    p_run.add_argument("--log", default=None, metavar="PATH", help="write a JSONL trial log")
    p_run.add_argument(
        "--resume", default=None, metavar="LOG", help="resume from (and keep appending to) this log"
    )
    p_run.add_argument("--csv", default=None, metavar="PATH", help="write a per-iteration CSV")
    p_run.add_argument(
        "--no-importance", action="store_true", help="skip the post-run importance analysis"
    )
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="summarize an existing trial log")
    p_rep.add_argument("log", help="JSONL trial log")
    p_rep.add_argument(
        "--window", type=int, default=25, help="trailing window for the crash-rate column"
    )
    p_rep.add_argument("--csv", default=None, metavar="PATH", help="write a per-iteration CSV")
    p_rep.set_defaults(func=_cmd_report)

    p_cmp = sub.add_parser(
        "compare", help="run several job files (one per strategy) across shared seeds"
    )
    p_cmp.add_argument("jobs", nargs="+", help="job files differing only in strategy")
    p_cmp.add_argument("--seeds", default="0", help="comma-separated seeds (default: 0)")
    p_cmp.add_argument("--csv", default=None, metavar="PATH", help="write the comparison CSV")
    p_cmp.add_argument("--workers", type=int, default=1, help="parallel sessions")
    p_cmp.add_argument(
        "--threshold",
        type=float,
        default=None,
        help="objective level for iterations-to-threshold (default: lowest median final best)",
    )
    p_cmp.set_defaults(func=_cmd_compare)

    p_imp = sub.add_parser(
        "importance", help="rank parameters of a saved model against a log's trials"
    )
    p_imp.add_argument("log", help="JSONL trial log")
    p_imp.add_argument("--model", required=True, metavar="DOC", help="saved model document")
    p_imp.set_defaults(func=_cmd_importance)

    p_inf = sub.add_parser("infer-space", help="probe a live target for tunable options")
    p_inf.add_argument(
        "--probe-cmd",
        required=True,
        metavar="CMD",
        help="command invoked as 'CMD read OPT' / 'CMD write OPT VALUE'",
    )
    p_inf.add_argument(
        "--options", required=True, metavar="FILE", help="file listing option names, one per line"
    )
    p_inf.add_argument("-o", "--output", default=None, metavar="PATH", help="write the space here")
    p_inf.set_defaults(func=_cmd_infer_space)

    p_exp = sub.add_parser(
        "export-model", help="replay a deeptune log and save the trained model"
    )
    p_exp.add_argument("log", help="JSONL trial log from a deeptune session")
    p_exp.add_argument("-o", "--output", required=True, metavar="PATH", help="model output path")
    p_exp.set_defaults(func=_cmd_export_model)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
