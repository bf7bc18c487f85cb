"""Typed configuration spaces: declaring, validating, sampling, encoding.

A tuning job starts from a ConfigSpace: a list of typed parameters, each
tagged with the lifecycle stage it affects (compile / boot / run).  The
space knows how to validate configurations, sample them uniformly, and
encode them into the fixed-width numeric vectors the surrogate model and
the distance-based selection rule operate on.

Run:  python3 demos/01_space_and_encoding.py
"""

import json

import numpy as np

from cfgtune.space import (
    ConfigSpace,
    EncodingLayout,
    ParameterDef,
    job_from_dict,
    sample_uniform,
)

# --- declare a small mixed-type space -------------------------------------
# Four kinds of parameter are supported.  Integer parameters whose range
# spans several decades (like cache_kb below) are automatically encoded on a
# log10 axis so that 1 -> 10 and 10_000 -> 100_000 look like equal steps.
space = ConfigSpace(
    params=(
        ParameterDef("worker_share", "continuous", "run", default=0.5, bounds=(0.0, 1.0)),
        ParameterDef("queue_depth", "integer", "run", default=64, bounds=(1, 512)),
        ParameterDef("cache_kb", "integer", "boot", default=1024, bounds=(1, 100_000)),
        ParameterDef("use_busy_poll", "boolean", "run"),
        ParameterDef("scheduler", "categorical", "compile", default="fair",
                     choices=("fair", "fifo", "batch")),
    )
)

size = space.size()  # None when any free parameter is continuous
print(f"space has {len(space)} parameters; "
      f"{'continuum of' if size is None else size} distinct configs")
print("defaults:", json.dumps(space.default_config(), sort_keys=True))

# --- validation rejects out-of-domain values -------------------------------
bad = dict(space.default_config(), queue_depth=9999)
try:
    space.validate_config(bad)
except Exception as exc:
    print("validation rejects queue_depth=9999:", exc)

# --- sampling: one lifecycle stage varies per draw -------------------------
# Each draw picks a stage from the space's stage weights and perturbs only
# that stage's parameters, leaving the rest at their defaults.  This mirrors
# how staged systems are explored: you rarely rebuild everything at once.
rng = np.random.default_rng(0)
for _ in range(3):
    print("sample:", json.dumps(sample_uniform(space, rng), sort_keys=True))

# --- encoding: the numeric view the model sees ------------------------------
layout = EncodingLayout(space)
print(f"\nencoded width: {layout.width} features")
for entry in layout.entries:
    print(f"  {entry.name:>14} -> columns [{entry.start}, {entry.stop})")

vec = layout.encode(space.default_config())
print("default config encodes to:", np.round(vec, 3))

# --- job documents ----------------------------------------------------------
# A job bundles space + evaluator + objective + budget + strategy.  Jobs are
# plain JSON/YAML documents; their fingerprint ties trial logs to the exact
# job that produced them (used by resume).  Here the evaluator is a named
# synthetic benchmark preset, so the job uses that preset's own space.
from cfgtune.harness import single_factor_space

job = job_from_dict(
    {
        "space": single_factor_space().to_dict(),
        "evaluator": {"type": "synthetic", "preset": "single_factor"},
        "objective": {"metric": "perf", "direction": "maximize"},
        "budget": {"iterations": 20},
        "strategy": "random",
        "seed": 7,
    }
)
print("\njob fingerprint:", job.fingerprint()[:16], "…")
