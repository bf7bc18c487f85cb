"""The multitask surrogate: crash probability, performance, uncertainty.

One network, three heads.  A shared trunk feeds (a) a two-way classifier
that predicts whether a configuration will crash, (b) a regression head
that predicts the objective, and (c) a familiarity head built from radial
basis units whose centroids are trained to track the latent positions of
configurations seen so far — inputs far from every centroid come out with
high predicted variance.

Run:  python3 demos/02_surrogate_model.py   (~20 s)
"""

import numpy as np

from cfgtune.deeptune import TrainingSet, build_model, save_model, train, warm_start
from cfgtune.harness import default_landscape, eval_synthetic
from cfgtune.space import EncodingLayout, sample_uniform

landscape = default_landscape()
layout = EncodingLayout(landscape.space)
rng = np.random.default_rng(42)

# --- gather 300 trials by uniform sampling ---------------------------------
configs, crashed, objective = [], [], []
for _ in range(300):
    cfg = sample_uniform(landscape.space, rng)
    trial = eval_synthetic(landscape, cfg, rng)
    configs.append(cfg)
    crashed.append(trial.outcome == "crashed")
    objective.append(np.nan if trial.outcome == "crashed" else trial.metrics["perf"])

inputs = layout.encode_batch(configs)
ts = TrainingSet(inputs, np.array(crashed), np.array(objective))
print(f"training on {len(ts)} trials, {np.mean(crashed):.0%} of them crashes")

# --- train ------------------------------------------------------------------
model = build_model(layout, seed=0)
losses = train(model, ts, epochs=150)
print(f"loss: {losses[0]:.3f} (epoch 1) -> {losses[-1]:.3f} (epoch {len(losses)})")

# --- the crash head is a usable classifier ----------------------------------
held = [sample_uniform(landscape.space, rng) for _ in range(400)]
truth = np.array([landscape.is_crash(c) for c in held])
pred = model.predict(layout.encode_batch(held))
accuracy = np.mean((pred.crash_prob > 0.5) == truth)
print(f"crash-classification accuracy on 400 held-out samples: {accuracy:.3f}")

# --- the regression head tracks the objective -------------------------------
ran = ~truth
true_vals = np.array([landscape.true_value(c, "perf") for c in held])
mae = np.abs(pred.performance[ran] - true_vals[ran]).mean()
print(f"performance MAE on feasible held-out samples: {mae:.3f} "
      f"(objective spans ~{true_vals[ran].min():.2f}..{true_vals[ran].max():.2f})")

# --- the familiarity head orders known vs unknown inputs --------------------
# Training inputs should look familiar (lower predicted sigma) than a batch
# of far-away probes.
far = inputs + rng.normal(0.0, 4.0, size=inputs.shape)
sigma_known = model.predict(inputs).uncertainty.mean()
sigma_far = model.predict(far).uncertainty.mean()
print(f"mean predicted sigma: training inputs {sigma_known:.3f} "
      f"vs far-away probes {sigma_far:.3f}")

# --- models serialize to a JSON document ------------------------------------
doc = save_model(model)
clone = warm_start(doc, layout)
same = np.allclose(clone.predict(inputs).performance, model.predict(inputs).performance)
print(f"save -> warm_start round trip preserves predictions: {same}")
