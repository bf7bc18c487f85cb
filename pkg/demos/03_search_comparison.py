"""Strategy shoot-out on a synthetic benchmark with a 30% crash region.

Four strategies run the same 60-iteration budget on the default synthetic
landscape (50 parameters, 8 of which matter).  Watch two numbers: the best
objective found, and how the crash rate evolves — the neural strategy
learns to steer around the crash region while random keeps paying the
full 30% tax.

Run:  python3 demos/03_search_comparison.py   (~40 s)
"""

import numpy as np

from cfgtune.harness import default_landscape
from cfgtune.orchestrator import run_session
from cfgtune.space import job_from_dict

landscape = default_landscape()
base = {
    "space": landscape.space.to_dict(),
    "evaluator": {"type": "synthetic", "preset": "default"},
    "objective": {"metric": "perf", "direction": "maximize"},
    "budget": {"iterations": 60},
    "seed": 3,
}

print(f"optimum of the benchmark: {landscape.optimum_value('perf'):.3f}\n")
print(f"{'strategy':>10} {'best':>7} {'found@':>7} {'crash 1-20':>11} {'crash 41-60':>12}")

for strategy in ("random", "grid", "bayes", "deeptune"):
    report = run_session(
        job_from_dict(dict(base, strategy=strategy)), compute_importance=False
    )
    early = np.mean(report.crashed[:20])
    late = np.mean(report.crashed[40:60])
    best = "  none" if report.best_objective is None else f"{report.best_objective:7.3f}"
    print(f"{strategy:>10} {best} {report.best_iteration!s:>7} "
          f"{early:>11.2f} {late:>12.2f}")

print(
    "\nThe neural strategy's crash rate falls once its classifier has seen"
    "\nenough failures, which frees budget for configurations that actually"
    "\nrun; at this tiny budget the best-value gap is noisy, but the crash"
    "\ncolumn already separates the strategies."
)
