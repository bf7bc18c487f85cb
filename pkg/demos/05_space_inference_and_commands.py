"""Discovering a space from a live target, then tuning a real command.

Two pieces of plumbing for tuning actual systems rather than synthetic
benchmarks:

1. space inference — given a read/write probe into a running target (think
   sysctl), discover which options are tunable and over what ranges;
2. command targets — each trial exports the configuration as WF_PARAM_*
   environment variables (and a JSON file passed as "$1") to a shell
   command, then parses the metric off its stdout.

Run:  python3 demos/05_space_inference_and_commands.py   (~15 s)
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

workdir = Path(tempfile.mkdtemp(prefix="cfgtune-demo-"))

# --- a mock "system" that the probe can read and write -----------------------
# Three options: an integer knob accepting 4..40000, a 0/1 flag, and a
# string-valued option that space inference must exclude.
state = workdir / "state.json"
state.write_text(json.dumps({"io_depth": "400", "use_merge": "1", "policy": "noop"}))
probe = workdir / "probe.py"
probe.write_text(f'''#!/usr/bin/env python3
import json, sys
STATE = {str(state)!r}
verb, opt = sys.argv[1], sys.argv[2]
doc = json.load(open(STATE))
if opt not in doc:
    sys.exit(1)
if verb == "read":
    print(doc[opt]); sys.exit(0)
value = sys.argv[3]
if opt == "io_depth" and not 4 <= int(value) <= 40000:
    sys.exit(1)
doc[opt] = value
json.dump(doc, open(STATE, "w"))
sys.exit(0)
''')

options = workdir / "options.txt"
options.write_text("io_depth\nuse_merge\npolicy\n")
space_path = workdir / "space.json"

cmd = [
    sys.executable, "-m", "cfgtune.cli", "infer-space",
    "--probe-cmd", f"{sys.executable} {probe}",
    "--options", str(options),
    "-o", str(space_path),
]
proc = subprocess.run(cmd, capture_output=True, text=True)
print("$ cfgtune infer-space --probe-cmd ... --options options.txt")
print(proc.stdout, end="")
print(proc.stderr, end="")

space_doc = json.loads(space_path.read_text())["space"]
for p in space_doc["params"]:
    print("  inferred:", json.dumps(p, sort_keys=True))

# --- tune a command target over the inferred space ---------------------------
# The "benchmark" is a shell command whose output depends on the exported
# WF_PARAM_* variables; here it rewards io_depth near 4000 and use_merge on.
job = {
    "space": space_doc,
    "evaluator": {
        "type": "command",
        "test": (
            'python3 -c "import math, os; d = float(os.environ[\'WF_PARAM_IO_DEPTH\']); '
            "m = os.environ['WF_PARAM_USE_MERGE'] == '1'; "
            'print(math.exp(-(math.log10(d / 4000) ** 2)) + 0.2 * m)"'
        ),
        "metric": "score",
        "timeout": 20,
    },
    "objective": {"metric": "score", "direction": "maximize"},
    "budget": {"iterations": 25},
    "strategy": "deeptune",
    "seed": 0,
}
job_path = workdir / "job.json"
job_path.write_text(json.dumps(job))

run = subprocess.run(
    [sys.executable, "-m", "cfgtune.cli", "run", str(job_path), "--csv", str(workdir / "report.csv")],
    capture_output=True, text=True,
)
print("\n$ cfgtune run job.json --csv report.csv")
print(run.stdout, end="")
print(f"(full per-iteration report in {workdir}/report.csv)")
