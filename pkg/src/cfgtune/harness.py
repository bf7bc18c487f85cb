"""Evaluation targets: synthetic landscapes and real command-line programs.

Both evaluator kinds reduce a configuration to a TrialResult.  Crashes are
data, not exceptions: a trial either ran and produced metrics, or crashed
with a reason (build, boot_or_run, timeout, parse).  Only misconfiguration
of the harness itself raises.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import shlex
import shutil
import signal
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .deeptune import multi_metric_score
from .space import ConfigSpace, EncodingLayout, ParameterDef, needs_rebuild

log = logging.getLogger(__name__)

OUTCOMES = ("ran", "crashed")
CRASH_REASONS = ("build", "boot_or_run", "timeout", "parse")

# Prefix for per-parameter environment variables passed to command targets.
ENV_PREFIX = "WF_PARAM_"


class HarnessError(ValueError):
    """The harness itself was misconfigured (distinct from a crashing trial)."""


@dataclass(frozen=True)
class TrialResult:
    """Outcome of evaluating one configuration."""

    config: dict[str, Any]
    outcome: str
    crash_reason: str | None = None
    metrics: dict[str, float] | None = None
    build_duration: float = 0.0
    test_duration: float = 0.0

    def __post_init__(self) -> None:
        if self.outcome not in OUTCOMES:
            raise HarnessError(f"unknown outcome {self.outcome!r}")
        if self.build_duration < 0 or self.test_duration < 0:
            raise HarnessError("durations must be non-negative")
        if self.outcome == "ran":
            if self.crash_reason is not None:
                raise HarnessError("ran trials carry no crash reason")
            if not self.metrics:
                raise HarnessError("ran trials must carry metrics")
        else:
            if self.crash_reason not in CRASH_REASONS:
                raise HarnessError(f"unknown crash reason {self.crash_reason!r}")
            if self.metrics is not None:
                raise HarnessError("crashed trials carry no metrics")

    @property
    def crashed(self) -> bool:
        return self.outcome == "crashed"

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": dict(self.config),
            "outcome": self.outcome,
            "crash_reason": self.crash_reason,
            "metrics": dict(self.metrics) if self.metrics is not None else None,
            "build_duration": self.build_duration,
            "test_duration": self.test_duration,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TrialResult":
        return cls(
            config=dict(doc["config"]),
            outcome=doc["outcome"],
            crash_reason=doc.get("crash_reason"),
            metrics=dict(doc["metrics"]) if doc.get("metrics") is not None else None,
            build_duration=doc.get("build_duration", 0.0),
            test_duration=doc.get("test_duration", 0.0),
        )


def objective_value(
    result: TrialResult,
    objective,
    stats: Mapping[str, tuple[float, float]] | None = None,
) -> float:
    """Scalar objective of a ran trial, framed so bigger is always better.

    Single-metric objectives return the metric (negated when minimizing).
    Multi-metric objectives need per-metric observed (min, max) ``stats``
    for normalization.
    """
    if result.crashed:
        raise HarnessError("crashed trials have no objective value")
    if objective.is_multi:
        if stats is None:
            raise HarnessError("multi-metric objectives need observed metric stats")
        return multi_metric_score(result.metrics, stats, objective.signed_weights())
    term = objective.terms[0]
    if term.metric not in result.metrics:
        raise HarnessError(
            f"objective metric {term.metric!r} missing from trial metrics "
            f"{sorted(result.metrics)}"
        )
    value = float(result.metrics[term.metric])
    return value if term.direction == "maximize" else -value


def update_metric_stats(
    stats: dict[str, tuple[float, float]], metrics: Mapping[str, float]
) -> None:
    """Fold one trial's metrics into running per-metric (min, max) stats."""
    for name, value in metrics.items():
        if name in stats:
            lo, hi = stats[name]
            stats[name] = (min(lo, value), max(hi, value))
        else:
            stats[name] = (value, value)


# ---------------------------------------------------------------------------
# Synthetic landscapes


def _normalized_position(p: ParameterDef, value: Any) -> float:
    """Map a numeric value to [0, 1] along the parameter's encoding axis."""
    lo, hi = p.bounds
    if p.log_encoded:
        return (math.log10(value) - math.log10(lo)) / (math.log10(hi) - math.log10(lo))
    if hi == lo:
        return 0.0
    return (float(value) - lo) / (hi - lo)


@dataclass(frozen=True)
class Bump:
    """Unimodal contribution of one parameter to one metric.

    Numeric parameters contribute exp(-((t - t_best)/width)^2) with t the
    value's normalized position along the parameter's (possibly log) axis;
    boolean/categorical parameters contribute 1.0 at the best value and 0
    elsewhere.  Every bump peaks at exactly 1.
    """

    metric: str
    param: str
    weight: float
    best: Any
    width: float = 0.2

    def contribution(self, p: ParameterDef, value: Any) -> float:
        if p.is_numeric and p.kind != "boolean":
            t = _normalized_position(p, value)
            t_best = _normalized_position(p, self.best)
            return math.exp(-(((t - t_best) / self.width) ** 2))
        return 1.0 if value == self.best else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "metric": self.metric,
            "param": self.param,
            "weight": self.weight,
            "best": self.best,
            "width": self.width,
        }


@dataclass(frozen=True)
class CrashRegion:
    """Forbidden values of one parameter; configurations inside crash.

    Numeric parameters use an inclusive [lo, hi] value interval;
    boolean/categorical parameters list the crashing values.
    """

    param: str
    lo: float | None = None
    hi: float | None = None
    values: tuple[Any, ...] | None = None

    def __post_init__(self) -> None:
        interval = self.lo is not None and self.hi is not None
        if interval == (self.values is not None):
            raise HarnessError(
                f"crash region on {self.param!r} needs either [lo, hi] or values"
            )
        if interval and self.lo > self.hi:
            raise HarnessError(f"crash region on {self.param!r}: lo exceeds hi")

    def contains(self, value: Any) -> bool:
        if self.values is not None:
            return value in self.values
        return self.lo <= value <= self.hi

    def fraction(self, p: ParameterDef) -> float:
        """Share of the parameter's domain covered by this region."""
        if self.values is not None:
            card = p.cardinality() or len(p.choices or ())
            return len(self.values) / card if card else 0.0
        plo, phi = p.bounds
        if p.kind == "integer":
            count = math.floor(min(self.hi, phi)) - math.ceil(max(self.lo, plo)) + 1
            return max(count, 0) / (phi - plo + 1)
        width = phi - plo
        return max(min(self.hi, phi) - max(self.lo, plo), 0.0) / width if width else 0.0

    def to_dict(self) -> dict[str, Any]:
        if self.values is not None:
            return {"param": self.param, "values": list(self.values)}
        return {"param": self.param, "lo": self.lo, "hi": self.hi}


class SyntheticLandscape:
    """A crash-aware test function over a configuration space.

    The metric value of a configuration is the weighted sum of per-parameter
    bumps plus Gaussian observation noise.  Configurations falling inside
    any crash region crash instead of producing metrics.  The optimum (every
    bump at its peak, all other parameters at defaults) is known by
    construction and guaranteed not to crash.
    """

    def __init__(
        self,
        space: ConfigSpace,
        bumps: list[Bump],
        crash_regions: list[CrashRegion] = (),
        noise_std: float = 0.0,
    ):
        self.space = space
        self.bumps = list(bumps)
        self.crash_regions = list(crash_regions)
        self.noise_std = float(noise_std)
        if self.noise_std < 0:
            raise HarnessError("noise_std must be non-negative")
        seen = set()
        for b in self.bumps:
            p = space[b.param] if b.param in space.names else None
            if p is None:
                raise HarnessError(f"bump references unknown parameter {b.param!r}")
            if not p.accepts(b.best):
                raise HarnessError(f"bump best {b.best!r} outside domain of {b.param!r}")
            if b.weight < 0:
                raise HarnessError(f"bump on {b.param!r} has negative weight")
            if (b.metric, b.param) in seen:
                raise HarnessError(f"duplicate bump for {b.param!r} on metric {b.metric!r}")
            seen.add((b.metric, b.param))
        for r in self.crash_regions:
            if r.param not in space.names:
                raise HarnessError(f"crash region references unknown parameter {r.param!r}")
        for metric in self.metric_names:
            best = self.optimum_config(metric)
            if self.is_crash(best):
                raise HarnessError(
                    f"optimum configuration for metric {metric!r} falls in a crash region"
                )

    @property
    def metric_names(self) -> tuple[str, ...]:
        return tuple(sorted({b.metric for b in self.bumps}))

    @property
    def important_params(self) -> tuple[str, ...]:
        return tuple(sorted({b.param for b in self.bumps}))

    def is_crash(self, config: Mapping[str, Any]) -> bool:
        return any(r.contains(config[r.param]) for r in self.crash_regions)

    def crash_reason_for(self, config: Mapping[str, Any]) -> str:
        """Crash reason derived from the stage of the first violated region."""
        for r in self.crash_regions:
            if r.contains(config[r.param]):
                return "build" if self.space[r.param].stage == "compile" else "boot_or_run"
        raise HarnessError("configuration does not crash")

    def crash_fraction(self) -> float:
        """Analytic crash probability of a uniform draw varying all region params.

        Assumes region parameters are sampled jointly (true when they share
        one lifecycle stage, as in the shipped presets).
        """
        survive = 1.0
        for r in self.crash_regions:
            survive *= 1.0 - r.fraction(self.space[r.param])
        return 1.0 - survive

    def true_value(self, config: Mapping[str, Any], metric: str) -> float:
        """Noise-free metric value."""
        total = 0.0
        for b in self.bumps:
            if b.metric == metric:
                total += b.weight * b.contribution(self.space[b.param], config[b.param])
        return total

    def optimum_config(self, metric: str | None = None) -> dict[str, Any]:
        config = self.space.default_config()
        for b in self.bumps:
            if metric is None or b.metric == metric:
                config[b.param] = b.best
        return config

    def optimum_value(self, metric: str) -> float:
        return float(sum(b.weight for b in self.bumps if b.metric == metric))

    def to_dict(self) -> dict[str, Any]:
        return {
            "bumps": [b.to_dict() for b in self.bumps],
            "crash_regions": [r.to_dict() for r in self.crash_regions],
            "noise_std": self.noise_std,
        }

    @classmethod
    def from_dict(cls, space: ConfigSpace, doc: Mapping[str, Any]) -> "SyntheticLandscape":
        bumps = [
            Bump(
                metric=b.get("metric", "perf"),
                param=b["param"],
                weight=float(b["weight"]),
                best=b["best"],
                width=float(b.get("width", 0.2)),
            )
            for b in doc.get("bumps", [])
        ]
        regions = []
        for r in doc.get("crash_regions", []):
            if "values" in r:
                regions.append(CrashRegion(param=r["param"], values=tuple(r["values"])))
            else:
                regions.append(CrashRegion(param=r["param"], lo=r["lo"], hi=r["hi"]))
        return cls(space, bumps, regions, noise_std=float(doc.get("noise_std", 0.0)))


def eval_synthetic(
    landscape: SyntheticLandscape,
    config: Mapping[str, Any],
    rng: np.random.Generator,
) -> TrialResult:
    """Evaluate a configuration against a synthetic landscape.

    Deterministic given the rng state: crash checks are pure predicates and
    the only randomness is one observation-noise draw per metric.
    """
    config = dict(config)
    if landscape.is_crash(config):
        return TrialResult(
            config=config, outcome="crashed", crash_reason=landscape.crash_reason_for(config)
        )
    metrics = {}
    for metric in landscape.metric_names:
        value = landscape.true_value(config, metric)
        if landscape.noise_std > 0:
            value += landscape.noise_std * rng.standard_normal()
        metrics[metric] = float(value)
    return TrialResult(config=config, outcome="ran", metrics=metrics)


# ---------------------------------------------------------------------------
# Shipped landscape presets


def default_space() -> ConfigSpace:
    """The 50-parameter mixed-kind space used by the shipped presets."""
    params: list[ParameterDef] = []
    for i in range(20):
        params.append(
            ParameterDef(f"p{i:02d}", "continuous", "run", default=0.5, bounds=(0.0, 1.0))
        )
    for i in range(20, 32):
        params.append(
            ParameterDef(f"p{i:02d}", "integer", "run", default=500, bounds=(0, 1000))
        )
    for i in range(32, 35):  # five decades -> log10-encoded
        params.append(
            ParameterDef(f"p{i:02d}", "integer", "run", default=1000, bounds=(1, 100000))
        )
    for i in range(35, 45):
        params.append(ParameterDef(f"p{i:02d}", "boolean", "run", default=False))
    for i in range(45, 50):
        params.append(
            ParameterDef(
                f"p{i:02d}", "categorical", "run", default="a", choices=("a", "b", "c", "d")
            )
        )
    return ConfigSpace(params=tuple(params))


# Two crash slabs at the top of the two heaviest parameters; each covers
# 1 - sqrt(0.7) of its range so a uniform draw crashes with probability 0.30.
_CRASH_EDGE = math.sqrt(0.7)  # 0.836660...

DEFAULT_NOISE_STD = 0.05


def default_landscape(noise_std: float = DEFAULT_NOISE_STD) -> SyntheticLandscape:
    """Desk-scale tuning benchmark: 50 parameters, 8 important, 30% crash region.

    The two heaviest parameters peak just below their crash slabs, so the
    best configurations sit close to the failure boundary.
    """
    bumps = [
        Bump("perf", "p00", 1.00, 0.78, 0.16),
        Bump("perf", "p01", 0.85, 0.74, 0.16),
        Bump("perf", "p02", 0.35, 0.62, 0.22),
        Bump("perf", "p03", 0.30, 0.41, 0.22),
        Bump("perf", "p20", 0.25, 820, 0.25),
        Bump("perf", "p32", 0.20, 31623, 0.30),
        Bump("perf", "p35", 0.20, True),
        Bump("perf", "p45", 0.15, "c"),
    ]
    regions = [
        CrashRegion("p00", lo=_CRASH_EDGE, hi=1.0),
        CrashRegion("p01", lo=_CRASH_EDGE, hi=1.0),
    ]
    return SyntheticLandscape(default_space(), bumps, regions, noise_std=noise_std)


def transfer_landscape(noise_std: float = DEFAULT_NOISE_STD) -> SyntheticLandscape:
    """A related task over the same space: shares 6 of 8 important parameters.

    Crash structure is identical to the default landscape; two of the light
    bumps move to different parameters and shared weights shift slightly.
    """
    bumps = [
        Bump("perf", "p00", 0.95, 0.76, 0.16),
        Bump("perf", "p01", 0.90, 0.72, 0.16),
        Bump("perf", "p02", 0.30, 0.55, 0.22),
        Bump("perf", "p05", 0.30, 0.66, 0.22),  # replaces p03
        Bump("perf", "p20", 0.20, 760, 0.25),
        Bump("perf", "p33", 0.25, 10000, 0.30),  # replaces p32
        Bump("perf", "p35", 0.25, True),
        Bump("perf", "p45", 0.15, "c"),
    ]
    regions = [
        CrashRegion("p00", lo=_CRASH_EDGE, hi=1.0),
        CrashRegion("p01", lo=_CRASH_EDGE, hi=1.0),
    ]
    return SyntheticLandscape(default_space(), bumps, regions, noise_std=noise_std)


def single_factor_space() -> ConfigSpace:
    params = [
        ParameterDef("q0", "continuous", "run", default=0.5, bounds=(0.0, 1.0)),
        ParameterDef("q1", "continuous", "run", default=0.5, bounds=(0.0, 1.0)),
        ParameterDef("q2", "continuous", "run", default=0.5, bounds=(0.0, 1.0)),
        ParameterDef("q3", "continuous", "run", default=0.5, bounds=(0.0, 1.0)),
        ParameterDef("q4", "integer", "run", default=50, bounds=(0, 100)),
        ParameterDef("q5", "integer", "run", default=50, bounds=(0, 100)),
        ParameterDef("q6", "boolean", "run", default=False),
        ParameterDef("q7", "categorical", "run", default="x", choices=("x", "y", "z")),
    ]
    return ConfigSpace(params=tuple(params))


def single_factor_landscape(noise_std: float = 0.01) -> SyntheticLandscape:
    """Eight parameters, exactly one of which drives the metric."""
    bumps = [Bump("perf", "q0", 1.0, 0.7, 0.2)]
    return SyntheticLandscape(single_factor_space(), bumps, noise_std=noise_std)


LANDSCAPE_PRESETS = {
    "default": default_landscape,
    "transfer": transfer_landscape,
    "single_factor": single_factor_landscape,
}


# ---------------------------------------------------------------------------
# Command-line targets

GRACE_SECONDS = 5.0

_SHELL_BUILTINS = {
    "cd", "echo", "exit", "true", "false", "test", "[", ":", "set", "read",
    "wait", "exec", "eval", "printf", "sleep", "sh",
}


def _check_command(cmd: str, what: str) -> None:
    """Reject commands whose program does not exist (a config error, not a crash)."""
    try:
        tokens = shlex.split(cmd)
    except ValueError as exc:
        raise HarnessError(f"{what} command is not parseable: {exc}") from exc
    if not tokens:
        raise HarnessError(f"{what} command is empty")
    prog = tokens[0]
    if prog in _SHELL_BUILTINS or "=" in prog:
        return
    if os.path.sep in prog:
        if not os.path.exists(prog):
            raise HarnessError(f"{what} command not found: {prog}")
        return
    if shutil.which(prog) is None:
        raise HarnessError(f"{what} command not found: {prog}")


def env_var_name(param_name: str) -> str:
    """Environment variable carrying a parameter's value (WF_PARAM_<NAME>)."""
    sanitized = re.sub(r"[^A-Za-z0-9]", "_", param_name).upper()
    return ENV_PREFIX + sanitized


def _env_value(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


@dataclass(frozen=True)
class CommandTarget:
    """A real program evaluated by running shell commands.

    The test command receives the configuration twice: as WF_PARAM_<NAME>
    environment variables and as a JSON file whose path arrives as the
    shell positional parameter $1 (commands that ignore it keep their
    stdout clean).  ``parse`` is either {"type": "last_line"} (last stdout line
    is the metric value) or {"type": "pattern", "pattern": ...} with named
    regex groups, one metric per group.
    """

    test_cmd: str
    build_cmd: str | None = None
    timeout_s: float = 60.0
    parse: dict[str, Any] = field(default_factory=lambda: {"type": "last_line"})
    metric: str = "value"
    workdir: str | None = None
    grace_s: float = GRACE_SECONDS

    def __post_init__(self) -> None:
        _check_command(self.test_cmd, "test")
        if self.build_cmd is not None:
            _check_command(self.build_cmd, "build")
        if self.timeout_s <= 0:
            raise HarnessError("timeout must be positive")
        kind = self.parse.get("type")
        if kind not in ("last_line", "pattern"):
            raise HarnessError(f"unknown parse rule {kind!r}")
        if kind == "pattern":
            try:
                compiled = re.compile(self.parse["pattern"])
            except (KeyError, re.error) as exc:
                raise HarnessError(f"bad parse pattern: {exc}") from exc
            if not compiled.groupindex:
                raise HarnessError("parse pattern needs at least one named group")


def _run_with_timeout(
    cmd: str,
    env: dict[str, str],
    timeout_s: float,
    grace_s: float,
    cwd: str | None,
    args: tuple[str, ...] = (),
) -> tuple[int | None, str, float]:
    """Run a shell command in its own process group with kill escalation.

    Extra ``args`` become the shell's positional parameters ($1, $2, ...),
    so commands that ignore them stay byte-clean on stdout.  On timeout:
    SIGINT to the group, a grace period, then SIGKILL.  Returns
    (returncode or None when killed by timeout, stdout, duration).
    """
    start = time.perf_counter()
    proc = subprocess.Popen(
        ["/bin/sh", "-c", cmd, "sh", *args],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        env=env,
        cwd=cwd,
        start_new_session=True,
        text=True,
    )
    try:
        stdout, _ = proc.communicate(timeout=timeout_s)
        return proc.returncode, stdout, time.perf_counter() - start
    except subprocess.TimeoutExpired:
        pgid = os.getpgid(proc.pid)
        try:
            os.killpg(pgid, signal.SIGINT)
        except ProcessLookupError:
            pass
        try:
            stdout, _ = proc.communicate(timeout=grace_s)
        except subprocess.TimeoutExpired:
            try:
                os.killpg(pgid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            stdout, _ = proc.communicate()
        return None, stdout or "", time.perf_counter() - start


def _parse_metrics(target: CommandTarget, stdout: str) -> dict[str, float] | None:
    """Extract metrics from stdout, or None when unparsable."""
    if target.parse["type"] == "last_line":
        lines = [line for line in stdout.strip().splitlines() if line.strip()]
        if not lines:
            return None
        try:
            return {target.metric: float(lines[-1].strip())}
        except ValueError:
            return None
    match = re.search(target.parse["pattern"], stdout)
    if match is None:
        return None
    try:
        return {name: float(val) for name, val in match.groupdict().items()}
    except (TypeError, ValueError):
        return None


def eval_command(
    target: CommandTarget,
    space: ConfigSpace,
    config: Mapping[str, Any],
    prev_config: Mapping[str, Any] | None,
) -> TrialResult:
    """Build (when compile/boot values changed) and run the target command."""
    config = dict(config)
    env = dict(os.environ)
    for name, value in config.items():
        env[env_var_name(name)] = _env_value(value)

    build_duration = 0.0
    if target.build_cmd is not None and needs_rebuild(space, prev_config, config):
        code, _, build_duration = _run_with_timeout(
            target.build_cmd, env, target.timeout_s, target.grace_s, target.workdir
        )
        if code != 0:
            return TrialResult(
                config=config,
                outcome="crashed",
                crash_reason="build",
                build_duration=build_duration,
            )

    fd, config_path = tempfile.mkstemp(suffix=".json", prefix="cfgtune-")
    try:
        with os.fdopen(fd, "w") as handle:
            json.dump(config, handle)
        code, stdout, test_duration = _run_with_timeout(
            target.test_cmd,
            env,
            target.timeout_s,
            target.grace_s,
            target.workdir,
            args=(config_path,),
        )
    finally:
        try:
            os.unlink(config_path)
        except OSError:
            pass

    common = {"config": config, "build_duration": build_duration, "test_duration": test_duration}
    if code is None:
        return TrialResult(outcome="crashed", crash_reason="timeout", **common)
    if code != 0:
        return TrialResult(outcome="crashed", crash_reason="boot_or_run", **common)
    metrics = _parse_metrics(target, stdout)
    if metrics is None:
        return TrialResult(outcome="crashed", crash_reason="parse", **common)
    return TrialResult(outcome="ran", metrics=metrics, **common)


# ---------------------------------------------------------------------------
# Evaluator objects wired from job documents


class SyntheticEvaluator:
    def __init__(self, landscape: SyntheticLandscape):
        self.landscape = landscape

    def evaluate(self, config, prev_config, rng) -> TrialResult:
        return eval_synthetic(self.landscape, config, rng)


class CommandEvaluator:
    def __init__(self, target: CommandTarget, space: ConfigSpace):
        self.target = target
        self.space = space

    def evaluate(self, config, prev_config, rng) -> TrialResult:
        return eval_command(self.target, self.space, config, prev_config)


def make_evaluator(descriptor: Mapping[str, Any], space: ConfigSpace):
    """Build an evaluator from a job document's ``evaluator`` section."""
    kind = descriptor.get("type")
    if kind == "synthetic":
        if "preset" in descriptor:
            name = descriptor["preset"]
            if name not in LANDSCAPE_PRESETS:
                raise HarnessError(
                    f"unknown landscape preset {name!r}; expected one of "
                    f"{sorted(LANDSCAPE_PRESETS)}"
                )
            kwargs = {}
            if "noise_std" in descriptor:
                kwargs["noise_std"] = float(descriptor["noise_std"])
            landscape = LANDSCAPE_PRESETS[name](**kwargs)
            if EncodingLayout(landscape.space).fingerprint() != EncodingLayout(space).fingerprint():
                raise HarnessError(
                    f"job space does not match the space of landscape preset {name!r}"
                )
            return SyntheticEvaluator(SyntheticLandscape(
                space, landscape.bumps, landscape.crash_regions, landscape.noise_std
            ))
        if "landscape" in descriptor:
            return SyntheticEvaluator(SyntheticLandscape.from_dict(space, descriptor["landscape"]))
        raise HarnessError("synthetic evaluator needs 'preset' or 'landscape'")
    if kind == "command":
        if "test" not in descriptor:
            raise HarnessError("command evaluator needs a 'test' command")
        target = CommandTarget(
            test_cmd=descriptor["test"],
            build_cmd=descriptor.get("build"),
            timeout_s=float(descriptor.get("timeout", 60.0)),
            parse=dict(descriptor.get("parse", {"type": "last_line"})),
            metric=descriptor.get("metric", "value"),
            workdir=descriptor.get("workdir"),
            grace_s=float(descriptor.get("grace", GRACE_SECONDS)),
        )
        return CommandEvaluator(target, space)
    raise HarnessError(f"unknown evaluator type {kind!r}")
