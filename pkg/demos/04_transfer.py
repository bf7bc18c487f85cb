"""Transfer learning: reuse a trained surrogate on a related task.

A surrogate trained while tuning one workload already knows the crash
boundary and the rough shape of the objective.  Warm-starting a session on
a related task (same space, most of the same important parameters) from
that model avoids re-paying the early-crash tax and reaches good
configurations sooner.

Run:  python3 demos/04_transfer.py   (~60 s)
"""

import tempfile
from pathlib import Path

import numpy as np

from cfgtune.harness import default_landscape, transfer_landscape
from cfgtune.orchestrator import export_model, run_session
from cfgtune.space import job_from_dict

BUDGET = 80


def job_doc(landscape_name, space):
    return {
        "space": space.to_dict(),
        "evaluator": {"type": "synthetic", "preset": landscape_name},
        "objective": {"metric": "perf", "direction": "maximize"},
        "budget": {"iterations": BUDGET},
        "strategy": "deeptune",
        "seed": 1,
    }


workdir = Path(tempfile.mkdtemp(prefix="cfgtune-transfer-"))

# --- 1. tune the original task and keep its log ------------------------------
donor_log = workdir / "donor.jsonl"
donor = run_session(
    job_from_dict(job_doc("default", default_landscape().space)),
    log_path=donor_log,
    compute_importance=False,
)
print(f"donor task tuned: best {donor.best_objective:.3f} over {BUDGET} iterations")

# --- 2. export the trained surrogate from the log ----------------------------
model_doc = export_model(donor_log)
print(f"exported model document: {len(model_doc)} bytes of JSON")

# --- 3. cold vs warm on the related task -------------------------------------
target_space = transfer_landscape().space
cold = run_session(
    job_from_dict(job_doc("transfer", target_space)), compute_importance=False
)

warm_doc = job_doc("transfer", target_space)
warm_doc["warm_start"] = model_doc
warm = run_session(job_from_dict(warm_doc), compute_importance=False)

for name, report in (("cold start", cold), ("warm start", warm)):
    early_crash = np.mean(report.crashed[:25])
    print(f"{name}: best {report.best_objective:.3f}, "
          f"crash rate over first 25 iterations {early_crash:.2f}")

print(
    "\nThe warm-started session inherits the donor's crash classifier, so its"
    "\nearly crash rate starts low instead of at the ~0.30 region fraction."
)
