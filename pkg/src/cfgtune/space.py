"""Typed configuration spaces: parameter definitions, sampling, encoding, job files.

A configuration space is an ordered collection of typed parameters, each
tagged with the lifecycle stage at which it takes effect (compile, boot,
run).  Spaces know how to draw uniform samples, how to encode configurations
into fixed-width numeric vectors for models, and how to parse/emit the
YAML/JSON job documents that describe a tuning session.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

log = logging.getLogger(__name__)

KINDS = ("boolean", "integer", "continuous", "categorical", "string")
STAGES = ("compile", "boot", "run")

# Strategy vocabulary accepted in job files.
STRATEGY_NAMES = ("random", "grid", "bayes", "deeptune")

# Integer ranges spanning at least this many decades are encoded in log10
# space so that huge ranges don't collapse small values into one bin.
LOG_ENCODE_DECADES = 4.0


class SpaceError(ValueError):
    """Semantic problem in a space, parameter, or job document."""


class JobSyntaxError(ValueError):
    """Job document is not parseable; message includes the position."""


class SpaceExhausted(RuntimeError):
    """Every distinct configuration of a finite space has been evaluated."""


@dataclass(frozen=True)
class ParameterDef:
    """One tunable parameter.

    ``bounds`` is the inclusive [lo, hi] range for numeric kinds; ``choices``
    is the value list for categorical/string kinds.  ``fixed`` pins the
    parameter to a single value for the whole session.
    """

    name: str
    kind: str
    stage: str = "run"
    default: Any = None
    bounds: tuple[float, float] | None = None
    choices: tuple[Any, ...] | None = None
    fixed: Any = None

    def __post_init__(self) -> None:
        if not self.name:
            raise SpaceError("parameter name must be non-empty")
        if self.kind not in KINDS:
            raise SpaceError(f"parameter {self.name!r}: unknown kind {self.kind!r}")
        if self.stage not in STAGES:
            raise SpaceError(f"parameter {self.name!r}: unknown stage {self.stage!r}")
        if self.is_numeric:
            if self.kind == "boolean":
                if self.bounds is not None:
                    raise SpaceError(f"parameter {self.name!r}: booleans take no range")
                object.__setattr__(self, "bounds", (0.0, 1.0))
                if self.default is None:
                    object.__setattr__(self, "default", False)
                if not isinstance(self.default, (bool, np.bool_)):
                    raise SpaceError(f"parameter {self.name!r}: boolean default must be true/false")
                object.__setattr__(self, "default", bool(self.default))
            else:
                if self.bounds is None:
                    raise SpaceError(f"parameter {self.name!r}: numeric kinds need a range")
                lo, hi = self.bounds
                if not (math.isfinite(lo) and math.isfinite(hi)):
                    raise SpaceError(f"parameter {self.name!r}: range must be finite")
                if lo > hi:
                    raise SpaceError(f"parameter {self.name!r}: range lo {lo} exceeds hi {hi}")
                if self.kind == "integer":
                    if int(lo) != lo or int(hi) != hi:
                        raise SpaceError(f"parameter {self.name!r}: integer range must be whole")
                    object.__setattr__(self, "bounds", (int(lo), int(hi)))
                else:
                    object.__setattr__(self, "bounds", (float(lo), float(hi)))
                if self.default is None:
                    raise SpaceError(f"parameter {self.name!r}: default required")
                self._check_value(self.default)
                coerce = int if self.kind == "integer" else float
                object.__setattr__(self, "default", coerce(self.default))
            if self.choices is not None:
                raise SpaceError(f"parameter {self.name!r}: numeric kinds take no choices")
        else:
            if not self.choices:
                raise SpaceError(f"parameter {self.name!r}: {self.kind} kinds need choices")
            object.__setattr__(self, "choices", tuple(self.choices))
            if len(set(self.choices)) != len(self.choices):
                raise SpaceError(f"parameter {self.name!r}: duplicate choices")
            if self.bounds is not None:
                raise SpaceError(f"parameter {self.name!r}: {self.kind} kinds take no range")
            if self.default is None:
                object.__setattr__(self, "default", self.choices[0])
            self._check_value(self.default)
        if self.fixed is not None:
            self._check_value(self.fixed)

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("boolean", "integer", "continuous")

    @property
    def log_encoded(self) -> bool:
        """True when the range is wide enough to warrant log10 encoding."""
        if self.kind != "integer" or self.bounds is None:
            return False
        lo, hi = self.bounds
        return lo > 0 and math.log10(hi / lo) >= LOG_ENCODE_DECADES

    def _check_value(self, value: Any) -> None:
        if not self.accepts(value):
            raise SpaceError(
                f"parameter {self.name!r}: value {value!r} outside its {self.kind} domain"
            )

    def accepts(self, value: Any) -> bool:
        """Whether ``value`` lies in this parameter's domain."""
        if self.kind == "boolean":
            return isinstance(value, (bool, np.bool_))
        if self.kind == "integer":
            if isinstance(value, (bool, np.bool_)):
                return False
            if not isinstance(value, (int, np.integer)):
                return False
            lo, hi = self.bounds
            return lo <= value <= hi
        if self.kind == "continuous":
            if isinstance(value, (bool, np.bool_)) or not isinstance(
                value, (int, float, np.integer, np.floating)
            ):
                return False
            lo, hi = self.bounds
            return lo <= value <= hi
        return value in self.choices

    def sample(self, rng: np.random.Generator) -> Any:
        """Uniform draw over the range/choices (ignores ``fixed``)."""
        if self.kind == "boolean":
            return bool(rng.random() < 0.5)
        if self.kind == "integer":
            lo, hi = self.bounds
            return int(rng.integers(lo, hi + 1))
        if self.kind == "continuous":
            lo, hi = self.bounds
            return float(rng.uniform(lo, hi))
        return self.choices[int(rng.integers(len(self.choices)))]

    def cardinality(self) -> int | None:
        """Number of distinct values, or None for continuous parameters."""
        if self.fixed is not None:
            return 1
        if self.kind == "boolean":
            return 2
        if self.kind == "integer":
            lo, hi = self.bounds
            return int(hi - lo + 1)
        if self.kind == "continuous":
            return None
        return len(self.choices)


@dataclass(frozen=True)
class ConfigSpace:
    """An ordered set of parameters plus per-stage sampling weights."""

    params: tuple[ParameterDef, ...]
    stage_weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))
        if not self.params:
            raise SpaceError("a space needs at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise SpaceError(f"parameter {dup!r}: duplicate name")
        stages_present = {p.stage for p in self.params}
        weights = dict(self.stage_weights)
        if not weights:
            # Default: uniform over the stages that actually occur.
            weights = {s: 1.0 / len(stages_present) for s in sorted(stages_present)}
        for stage, w in weights.items():
            if stage not in STAGES:
                raise SpaceError(f"stage weight for unknown stage {stage!r}")
            if w < 0:
                raise SpaceError(f"stage weight for {stage!r} must be non-negative")
        total = sum(weights.values())
        if abs(total - 1.0) > 1e-9:
            raise SpaceError(f"stage weights sum to {total}, expected 1.0")
        positive = {s for s, w in weights.items() if w > 0}
        if not positive & stages_present:
            raise SpaceError("all sampling weight lies on stages with no parameters")
        object.__setattr__(self, "stage_weights", weights)

    def __iter__(self):
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def __getitem__(self, name: str) -> ParameterDef:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def size(self) -> int | None:
        """Distinct configuration count, or None if any free parameter is continuous."""
        total = 1
        for p in self.params:
            card = p.cardinality()
            if card is None:
                return None
            total *= card
        return total

    def default_config(self) -> dict[str, Any]:
        return {p.name: (p.fixed if p.fixed is not None else p.default) for p in self.params}

    def validate_config(self, config: Mapping[str, Any]) -> None:
        """Raise SpaceError unless ``config`` assigns a legal value to every parameter."""
        for p in self.params:
            if p.name not in config:
                raise SpaceError(f"parameter {p.name!r}: missing from configuration")
            value = config[p.name]
            if p.fixed is not None and value != p.fixed:
                raise SpaceError(f"parameter {p.name!r}: fixed to {p.fixed!r}, got {value!r}")
            if not p.accepts(value):
                raise SpaceError(
                    f"parameter {p.name!r}: value {value!r} outside its {p.kind} domain"
                )

    def to_dict(self) -> dict[str, Any]:
        """Job-file representation of this space."""
        params = []
        for p in self.params:
            entry: dict[str, Any] = {"name": p.name, "kind": p.kind, "stage": p.stage}
            if p.kind == "boolean":
                entry["default"] = p.default
            elif p.is_numeric:
                entry["range"] = list(p.bounds)
                entry["default"] = p.default
            else:
                entry["choices"] = list(p.choices)
                entry["default"] = p.default
            if p.fixed is not None:
                entry["fixed"] = p.fixed
            params.append(entry)
        return {"params": params, "stage_weights": dict(self.stage_weights)}


def config_key(space: ConfigSpace, config: Mapping[str, Any]) -> tuple:
    """Hashable identity of a configuration, in space parameter order."""
    return tuple(config[p.name] for p in space.params)


def sample_uniform(space: ConfigSpace, rng: np.random.Generator) -> dict[str, Any]:
    """Draw one configuration.

    A single stage is drawn from the space's stage weights; parameters of
    that stage are sampled uniformly over their ranges/choices while every
    other parameter keeps its default.  Fixed parameters are always pinned.
    """
    stages = sorted(space.stage_weights)
    probs = np.array([space.stage_weights[s] for s in stages], dtype=float)
    stage = stages[int(rng.choice(len(stages), p=probs))]
    config = {}
    for p in space.params:
        if p.fixed is not None:
            config[p.name] = p.fixed
        elif p.stage == stage:
            config[p.name] = p.sample(rng)
        else:
            config[p.name] = p.default
    return config


def sample_batch(
    space: ConfigSpace, rng: np.random.Generator, count: int
) -> list[dict[str, Any]]:
    """Vectorized equivalent of ``count`` sample_uniform draws.

    Column-major sampling with per-parameter array draws; used for candidate
    pools where per-config Python loops would dominate the search cost.
    Draw order differs from repeated sample_uniform calls, so the two are
    deterministic individually but not interchangeable under one seed.
    """
    if count <= 0:
        return []
    stages = sorted(space.stage_weights)
    probs = np.array([space.stage_weights[s] for s in stages], dtype=float)
    stage_idx = rng.choice(len(stages), size=count, p=probs)
    stage_names = np.array(stages)[stage_idx]
    columns: dict[str, Any] = {}
    for p in space.params:
        if p.fixed is not None:
            columns[p.name] = [p.fixed] * count
            continue
        active = stage_names == p.stage
        n_active = int(active.sum())
        if p.kind == "boolean":
            col: list[Any] = [p.default] * count
            draws = rng.random(n_active) < 0.5
            vals = [bool(v) for v in draws]
        elif p.kind == "integer":
            col = [p.default] * count
            lo, hi = p.bounds
            vals = [int(v) for v in rng.integers(lo, hi + 1, size=n_active)]
        elif p.kind == "continuous":
            col = [p.default] * count
            lo, hi = p.bounds
            vals = [float(v) for v in rng.uniform(lo, hi, size=n_active)]
        else:
            col = [p.default] * count
            idx = rng.integers(len(p.choices), size=n_active)
            vals = [p.choices[int(i)] for i in idx]
        it = iter(vals)
        for i in np.flatnonzero(active):
            col[i] = next(it)
        columns[p.name] = col
    return [{name: columns[name][i] for name in space.names} for i in range(count)]


# ---------------------------------------------------------------------------
# Encoding


@dataclass(frozen=True)
class LayoutEntry:
    """Feature-block description for one parameter."""

    name: str
    kind: str
    encoding: str  # "zscore" | "zscore_log10" | "onehot"
    start: int
    stop: int
    mu: float = 0.0
    sigma: float = 1.0
    choices: tuple[Any, ...] | None = None


class EncodingLayout:
    """Maps configurations to fixed-width z-scored feature vectors.

    Numeric parameters become single features normalized with the moments of
    a uniform distribution over their range (mu = (lo+hi)/2, sigma =
    (hi-lo)/sqrt(12)); booleans use the range [0, 1].  Wide integer ranges
    (>= 4 decades, positive lo) are normalized in log10 space and flagged as
    such.  Categorical/string parameters become one-hot blocks.
    """

    def __init__(self, space: ConfigSpace):
        self.space = space
        entries = []
        cursor = 0
        for p in space.params:
            if p.is_numeric:
                lo, hi = p.bounds
                if p.log_encoded:
                    llo, lhi = math.log10(lo), math.log10(hi)
                    mu = (llo + lhi) / 2.0
                    sigma = (lhi - llo) / math.sqrt(12.0)
                    encoding = "zscore_log10"
                else:
                    mu = (lo + hi) / 2.0
                    sigma = (hi - lo) / math.sqrt(12.0)
                    encoding = "zscore"
                if sigma == 0.0:  # degenerate single-value range
                    sigma = 1.0
                entries.append(
                    LayoutEntry(p.name, p.kind, encoding, cursor, cursor + 1, mu, sigma)
                )
                cursor += 1
            else:
                width = len(p.choices)
                entries.append(
                    LayoutEntry(
                        p.name, p.kind, "onehot", cursor, cursor + width, choices=p.choices
                    )
                )
                cursor += width
        self.entries: tuple[LayoutEntry, ...] = tuple(entries)
        self.width: int = cursor

    def entry(self, name: str) -> LayoutEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def encode(self, config: Mapping[str, Any]) -> np.ndarray:
        return self.encode_batch([config])[0]

    def encode_batch(self, configs: Sequence[Mapping[str, Any]]) -> np.ndarray:
        """Encode many configurations into an (n, width) array."""
        n = len(configs)
        out = np.zeros((n, self.width), dtype=float)
        for e in self.entries:
            if e.encoding == "onehot":
                index = {c: i for i, c in enumerate(e.choices)}
                for i, cfg in enumerate(configs):
                    value = cfg[e.name]
                    if value not in index:
                        raise SpaceError(
                            f"parameter {e.name!r}: {value!r} is not one of {list(e.choices)}"
                        )
                    out[i, e.start + index[value]] = 1.0
            else:
                p = self.space[e.name]
                raw = np.array([float(cfg[e.name]) for cfg in configs])
                lo, hi = (0.0, 1.0) if p.bounds is None else p.bounds
                if raw.size and (raw.min() < lo or raw.max() > hi):
                    bad = raw[(raw < lo) | (raw > hi)][0]
                    raise SpaceError(
                        f"parameter {e.name!r}: value {bad!r} outside range [{lo}, {hi}]"
                    )
                if e.encoding == "zscore_log10":
                    raw = np.log10(raw)
                out[:, e.start] = (raw - e.mu) / e.sigma
        return out

    def decode(self, vector: np.ndarray) -> dict[str, Any]:
        """Inverse of encode; numeric values are clamped/rounded into range."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.width,):
            raise SpaceError(f"expected vector of width {self.width}, got {vector.shape}")
        config: dict[str, Any] = {}
        for e in self.entries:
            p = self.space[e.name]
            if e.encoding == "onehot":
                config[e.name] = e.choices[int(np.argmax(vector[e.start : e.stop]))]
                continue
            raw = vector[e.start] * e.sigma + e.mu
            if e.encoding == "zscore_log10":
                raw = 10.0**raw
            if p.kind == "boolean":
                config[e.name] = bool(raw > 0.5)
            elif p.kind == "integer":
                lo, hi = p.bounds
                config[e.name] = int(min(max(round(raw), lo), hi))
            else:
                lo, hi = p.bounds
                config[e.name] = float(min(max(raw, lo), hi))
        return config

    def fingerprint(self) -> str:
        """Stable hash of parameter names, kinds, domains, and encodings.

        Two spaces with equal fingerprints produce interchangeable feature
        vectors, which is the compatibility requirement for reusing a
        trained model across sessions.
        """
        desc = [
            {
                "name": e.name,
                "kind": e.kind,
                "encoding": e.encoding,
                "start": e.start,
                "stop": e.stop,
                "mu": e.mu,
                "sigma": e.sigma,
                "choices": [repr(c) for c in e.choices] if e.choices else None,
            }
            for e in self.entries
        ]
        blob = json.dumps(desc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Job documents


@dataclass(frozen=True)
class ObjectiveTerm:
    metric: str
    direction: str  # "maximize" | "minimize"
    weight: float = 1.0


@dataclass(frozen=True)
class Objective:
    """What the session optimizes: one metric or a weighted blend.

    Weights are non-negative in job files; the optimization direction of
    each term supplies the sign (minimized metrics enter negatively).
    The session always maximizes the resulting scalar.
    """

    terms: tuple[ObjectiveTerm, ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise SpaceError("objective needs at least one metric")
        for t in self.terms:
            if t.direction not in ("maximize", "minimize"):
                raise SpaceError(f"objective metric {t.metric!r}: bad direction {t.direction!r}")
            if t.weight < 0:
                raise SpaceError(f"objective metric {t.metric!r}: weight must be non-negative")

    @property
    def is_multi(self) -> bool:
        return len(self.terms) > 1

    def signed_weights(self) -> dict[str, float]:
        return {
            t.metric: (t.weight if t.direction == "maximize" else -t.weight)
            for t in self.terms
        }

    def to_dict(self) -> dict[str, Any]:
        if not self.is_multi:
            t = self.terms[0]
            return {"metric": t.metric, "direction": t.direction}
        return {
            "metrics": [
                {"metric": t.metric, "direction": t.direction, "weight": t.weight}
                for t in self.terms
            ]
        }


@dataclass(frozen=True)
class Budget:
    """Stopping rule: iteration count, wall-clock seconds, or both (first hit wins)."""

    iterations: int | None = None
    wall_clock_seconds: float | None = None

    def __post_init__(self) -> None:
        if self.iterations is None and self.wall_clock_seconds is None:
            raise SpaceError("budget needs iterations and/or wall_clock_seconds")
        if self.iterations is not None and self.iterations < 0:
            raise SpaceError("budget iterations must be non-negative")
        if self.wall_clock_seconds is not None and self.wall_clock_seconds < 0:
            raise SpaceError("budget wall_clock_seconds must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.iterations is not None:
            out["iterations"] = self.iterations
        if self.wall_clock_seconds is not None:
            out["wall_clock_seconds"] = self.wall_clock_seconds
        return out


@dataclass(frozen=True)
class JobSpec:
    """A fully validated tuning job."""

    space: ConfigSpace
    evaluator: dict[str, Any]
    objective: Objective
    budget: Budget
    strategy: str
    strategy_params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    warm_start: str | None = None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "space": self.space.to_dict(),
            "evaluator": self.evaluator,
            "objective": self.objective.to_dict(),
            "budget": self.budget.to_dict(),
            "strategy": (
                self.strategy
                if not self.strategy_params
                else {"name": self.strategy, **self.strategy_params}
            ),
            "seed": self.seed,
        }
        if self.warm_start:
            doc["warm_start"] = self.warm_start
        return doc

    def fingerprint(self) -> str:
        """Hash of the full job document; used to pair logs with jobs on resume."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _parse_param(entry: Any) -> ParameterDef:
    if not isinstance(entry, Mapping):
        raise SpaceError(f"space parameter entries must be mappings, got {entry!r}")
    name = entry.get("name")
    if not name:
        raise SpaceError("space parameter entry missing 'name'")
    known = {"name", "kind", "stage", "default", "range", "choices", "fixed"}
    unknown = set(entry) - known
    if unknown:
        raise SpaceError(f"parameter {name!r}: unknown keys {sorted(unknown)}")
    kind = entry.get("kind")
    if kind is None:
        raise SpaceError(f"parameter {name!r}: missing 'kind'")
    bounds = entry.get("range")
    if bounds is not None:
        if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
            raise SpaceError(f"parameter {name!r}: range must be [lo, hi]")
        bounds = tuple(bounds)
    choices = entry.get("choices")
    if choices is not None:
        if not isinstance(choices, (list, tuple)):
            raise SpaceError(f"parameter {name!r}: choices must be a list")
        choices = tuple(choices)
    return ParameterDef(
        name=name,
        kind=kind,
        stage=entry.get("stage", "run"),
        default=entry.get("default"),
        bounds=bounds,
        choices=choices,
        fixed=entry.get("fixed"),
    )


def space_from_dict(doc: Mapping[str, Any]) -> ConfigSpace:
    if not isinstance(doc, Mapping) or "params" not in doc:
        raise SpaceError("space definition needs a 'params' list")
    params = tuple(_parse_param(e) for e in doc["params"])
    weights = doc.get("stage_weights") or {}
    return ConfigSpace(params=params, stage_weights=weights)


def _parse_objective(doc: Any) -> Objective:
    if isinstance(doc, str):
        return Objective(terms=(ObjectiveTerm(metric=doc, direction="maximize"),))
    if not isinstance(doc, Mapping):
        raise SpaceError("objective must be a mapping or metric name")
    if "metrics" in doc:
        terms = []
        for m in doc["metrics"]:
            if not isinstance(m, Mapping) or "metric" not in m:
                raise SpaceError("objective metrics entries need a 'metric' name")
            terms.append(
                ObjectiveTerm(
                    metric=m["metric"],
                    direction=m.get("direction", "maximize"),
                    weight=float(m.get("weight", 1.0)),
                )
            )
        return Objective(terms=tuple(terms))
    if "metric" not in doc:
        raise SpaceError("objective needs 'metric' or 'metrics'")
    return Objective(
        terms=(
            ObjectiveTerm(metric=doc["metric"], direction=doc.get("direction", "maximize")),
        )
    )


def parse_job(text: str) -> JobSpec:
    """Parse a YAML or JSON job document into a validated JobSpec.

    Syntax problems raise JobSyntaxError with the offending position;
    semantic problems raise SpaceError naming the parameter or key.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise JobSyntaxError(
                f"job document syntax error at line {mark.line + 1}, column {mark.column + 1}: "
                f"{getattr(exc, 'problem', exc)}"
            ) from exc
        raise JobSyntaxError(f"job document syntax error: {exc}") from exc
    return job_from_dict(doc)


def job_from_dict(doc: Any) -> JobSpec:
    """Validate an already-parsed job mapping (the second half of parse_job)."""
    if not isinstance(doc, Mapping):
        raise SpaceError("job document must be a mapping at top level")
    known = {"space", "evaluator", "objective", "budget", "strategy", "seed", "warm_start"}
    unknown = set(doc) - known
    if unknown:
        raise SpaceError(f"job document: unknown top-level keys {sorted(unknown)}")
    for key in ("space", "evaluator", "objective", "budget", "strategy"):
        if key not in doc:
            raise SpaceError(f"job document: missing required key {key!r}")

    space = space_from_dict(doc["space"])
    evaluator = doc["evaluator"]
    if not isinstance(evaluator, Mapping) or "type" not in evaluator:
        raise SpaceError("evaluator needs a 'type' key")
    objective = _parse_objective(doc["objective"])

    bdoc = doc["budget"]
    if isinstance(bdoc, int):
        budget = Budget(iterations=bdoc)
    elif isinstance(bdoc, Mapping):
        budget = Budget(
            iterations=bdoc.get("iterations"),
            wall_clock_seconds=bdoc.get("wall_clock_seconds"),
        )
    else:
        raise SpaceError("budget must be an iteration count or a mapping")

    sdoc = doc["strategy"]
    if isinstance(sdoc, str):
        strategy, sparams = sdoc, {}
    elif isinstance(sdoc, Mapping):
        if "name" not in sdoc:
            raise SpaceError("strategy mapping needs a 'name' key")
        strategy = sdoc["name"]
        sparams = {k: v for k, v in sdoc.items() if k != "name"}
    else:
        raise SpaceError("strategy must be a name or a mapping with 'name'")
    if strategy not in STRATEGY_NAMES:
        raise SpaceError(f"unknown strategy {strategy!r}; expected one of {STRATEGY_NAMES}")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise SpaceError("seed must be an integer")
    warm_start = doc.get("warm_start")
    if warm_start is not None and not isinstance(warm_start, str):
        raise SpaceError("warm_start must be a path string")

    return JobSpec(
        space=space,
        evaluator=dict(evaluator),
        objective=objective,
        budget=budget,
        strategy=strategy,
        strategy_params=dict(sparams),
        seed=seed,
        warm_start=warm_start,
    )


# ---------------------------------------------------------------------------
# Rebuild detection


def needs_rebuild(
    space: ConfigSpace,
    prev: Mapping[str, Any] | None,
    nxt: Mapping[str, Any],
) -> bool:
    """True when moving prev -> nxt changes any compile- or boot-stage value.

    ``prev is None`` (first trial of a session) always rebuilds.
    """
    if prev is None:
        return True
    for p in space.params:
        if p.stage in ("compile", "boot") and prev.get(p.name) != nxt[p.name]:
            return True
    return False


# ---------------------------------------------------------------------------
# Space inference from a live target


@dataclass
class SpaceInference:
    """Result of probing a target for tunable options."""

    space: ConfigSpace | None
    non_numeric: list[tuple[str, str]] = field(default_factory=list)
    unreadable: list[str] = field(default_factory=list)


# Scaling probes: default multiplied/divided by 10**j for j = 1..3.
PROBE_EXPONENTS = (1, 2, 3)


def infer_space(probe: Any, options: Iterable[str]) -> SpaceInference:
    """Build a parameter space by probing each option of a live target.

    ``probe`` must provide ``read(option) -> str`` (raises on unreadable
    options) and ``write(option, value) -> bool`` (True when the target
    accepted the value).  For each readable option with an integer default:
    defaults of 0/1 become booleans; any other integer is probed by writing
    default*10**j and default//10**j for j in 1..3, stopping a direction at
    its first rejected write.  The inferred range spans the smallest and
    largest accepted values (always including the default).  Options with
    non-numeric defaults are excluded and reported; probed defaults are
    restored afterwards.
    """
    params: list[ParameterDef] = []
    non_numeric: list[tuple[str, str]] = []
    unreadable: list[str] = []
    for option in options:
        try:
            raw = str(probe.read(option)).strip()
        except Exception as exc:
            log.warning("option %s unreadable, skipping: %s", option, exc)
            unreadable.append(option)
            continue
        try:
            default = int(raw)
        except ValueError:
            non_numeric.append((option, raw))
            continue
        if default in (0, 1):
            params.append(
                ParameterDef(name=option, kind="boolean", stage="run", default=bool(default))
            )
            continue
        accepted = [default]
        for j in PROBE_EXPONENTS:  # upward: default * 10^j
            value = default * 10**j
            if not probe.write(option, value):
                break
            accepted.append(value)
        prev_value = default
        for j in PROBE_EXPONENTS:  # downward: default // 10^j, toward zero
            value = int(default / 10**j)
            if value == prev_value:
                break
            prev_value = value
            if not probe.write(option, value):
                break
            accepted.append(value)
        try:
            probe.write(option, default)
        except Exception:  # restoration is best-effort
            pass
        params.append(
            ParameterDef(
                name=option,
                kind="integer",
                stage="run",
                default=default,
                bounds=(min(accepted), max(accepted)),
            )
        )
    space = ConfigSpace(params=tuple(params)) if params else None
    return SpaceInference(space=space, non_numeric=non_numeric, unreadable=unreadable)
