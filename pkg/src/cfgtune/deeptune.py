"""Multitask neural surrogate with crash awareness and uncertainty scoring.

The model maps encoded configurations to three outputs at once: a 2-way
crash/ran classification, a scalar performance prediction, and a predicted
log-variance whose exponent is the model's own uncertainty about that
prediction.  Candidate selection combines the uncertainty with a
dissimilarity measure against already-evaluated configurations and gates out
candidates the classifier expects to crash.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .nn import RBF, Adam, Dense, Dropout, NNError, ReLU, _layer_from_dict
from .space import ConfigSpace, EncodingLayout, SpaceExhausted, config_key, sample_batch, sample_uniform

log = logging.getLogger(__name__)

HIDDEN_WIDTHS = (128, 64, 32)
N_CENTROIDS = 32
RBF_GAMMA = 0.1
DROPOUT_RATE = 0.1

ADAM_LR = 1e-3
CENTROID_LR = 5e-2
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
EPOCHS_PER_ROUND = 30
FULL_BATCH_LIMIT = 512
MINI_BATCH = 128

# Log-variance is clipped to this window inside the regression loss so a
# diverging head cannot overflow exp(); gradients vanish outside the window.
LOG_VAR_CLIP = 20.0

CRASHED, RAN = 0, 1  # class indices of the crash head

MODEL_FORMAT = "cfgtune-model"
MODEL_VERSION = 1


class DeepTuneError(ValueError):
    """Model construction, training, or scoring was asked to do something invalid."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message carries the component breakdown."""


@dataclass(frozen=True)
class ScoringParams:
    """Knobs of candidate selection."""

    alpha: float = 0.5  # dissimilarity weight; 1-alpha weights uncertainty
    pool_size: int = 1000
    crash_gate: float = 0.5  # candidates with predicted crash prob above this are dropped

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise DeepTuneError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.pool_size <= 0:
            raise DeepTuneError(f"pool_size must be positive, got {self.pool_size}")
        if not 0.0 <= self.crash_gate <= 1.0:
            raise DeepTuneError(f"crash_gate must lie in [0, 1], got {self.crash_gate}")


@dataclass(frozen=True)
class Prediction:
    """Batch model outputs in objective units."""

    crash_prob: np.ndarray  # (n,) probability the configuration crashes
    performance: np.ndarray  # (n,) predicted objective value
    uncertainty: np.ndarray  # (n,) predicted standard deviation, > 0


@dataclass(frozen=True)
class TrainingSet:
    """Encoded samples with crash labels and objective values.

    ``objectives`` entries for crashed samples are ignored (they may be NaN);
    entries for ran samples must be finite.
    """

    inputs: np.ndarray
    crashed: np.ndarray
    objectives: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=float)
        crashed = np.asarray(self.crashed, dtype=bool)
        objectives = np.asarray(self.objectives, dtype=float)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "crashed", crashed)
        object.__setattr__(self, "objectives", objectives)
        if inputs.ndim != 2:
            raise DeepTuneError(f"inputs must be (n, d), got {inputs.shape}")
        n = inputs.shape[0]
        if crashed.shape != (n,) or objectives.shape != (n,):
            raise DeepTuneError("crashed/objectives must match the input row count")
        if not np.all(np.isfinite(inputs)):
            raise DeepTuneError("inputs contain non-finite values")
        ran = ~crashed
        if not np.all(np.isfinite(objectives[ran])):
            raise DeepTuneError("objective values for ran samples must be finite")

    def __len__(self) -> int:
        return self.inputs.shape[0]


# ---------------------------------------------------------------------------
# Loss functions


def crash_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy over 2-way logits.

    Returns (loss, gradient w.r.t. logits).  Computed through a shifted
    log-sum-exp so extreme logits stay finite.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    per_sample = lse - shifted[np.arange(n), labels]
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return float(per_sample.mean()), grad / n


def regression_nll(
    y_pred: np.ndarray,
    log_var: np.ndarray,
    targets: np.ndarray,
    ran_mask: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Heteroscedastic regression loss, masked to ran samples.

    Per ran sample: (y - y_pred)^2 * exp(-s) / 2 + s / 2 where s is the
    predicted log-variance.  Crashed samples contribute nothing, so training
    on crashes alone leaves the performance head untouched.  Returns
    (loss, d/dy_pred, d/dlog_var); the mean runs over ran samples only.
    """
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    log_var = np.asarray(log_var, dtype=float).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    ran_mask = np.asarray(ran_mask, dtype=bool).reshape(-1)
    n_ran = int(ran_mask.sum())
    dy = np.zeros_like(y_pred)
    ds = np.zeros_like(log_var)
    if n_ran == 0:
        return 0.0, dy, ds
    s = np.clip(log_var, -LOG_VAR_CLIP, LOG_VAR_CLIP)
    inside = np.abs(log_var) < LOG_VAR_CLIP
    resid = targets - y_pred
    inv_var = np.exp(-s)
    per_sample = 0.5 * resid**2 * inv_var + 0.5 * s
    loss = float(per_sample[ran_mask].sum() / n_ran)
    dy[ran_mask] = (-resid * inv_var)[ran_mask] / n_ran
    ds[ran_mask & inside] = (0.5 - 0.5 * resid**2 * inv_var)[ran_mask & inside] / n_ran
    return loss, dy, ds


def chamfer_distance(
    centroids: np.ndarray, latents: np.ndarray
) -> tuple[float, np.ndarray]:
    """Symmetric mean-of-minima squared distance between two point sets.

    Returns (loss, gradient w.r.t. centroids).  The gradient is taken with
    respect to the centroids only; latents are treated as constants so the
    prediction pathway is not disturbed by centroid fitting.
    """
    centroids = np.asarray(centroids, dtype=float)
    latents = np.asarray(latents, dtype=float)
    if centroids.size == 0 or latents.size == 0:
        raise DeepTuneError("chamfer distance needs non-empty point sets")
    d2 = (
        (latents**2).sum(axis=1)[:, None]
        + (centroids**2).sum(axis=1)[None, :]
        - 2.0 * latents @ centroids.T
    )
    d2 = np.maximum(d2, 0.0)
    n, m = d2.shape
    near_c = d2.argmin(axis=1)  # nearest centroid per latent
    near_z = d2.argmin(axis=0)  # nearest latent per centroid
    loss = float(d2[np.arange(n), near_c].mean() + d2[near_z, np.arange(m)].mean())
    grad = np.zeros_like(centroids)
    np.add.at(grad, near_c, 2.0 * (centroids[near_c] - latents) / n)
    grad += 2.0 * (centroids - latents[near_z]) / m
    return loss, grad


# ---------------------------------------------------------------------------
# Model


class DeepTuneModel:
    """Prediction trunk with crash/performance heads and an RBF uncertainty branch.

    The trunk is Dense->ReLU->Dropout stacked at widths 128/64/32.  One RBF
    layer (32 centroids, gamma 0.1) runs parallel to each trunk block,
    reading that block's activations; their concatenated outputs feed a
    dense head that emits the predicted log-variance.  Centroids are fitted
    to the latents with a chamfer term whose gradient stops at the
    centroids, keeping prediction and uncertainty roles separate.
    """

    def __init__(
        self,
        layout: EncodingLayout,
        seed: int = 0,
        dropout: float = DROPOUT_RATE,
        widths: tuple[int, ...] = HIDDEN_WIDTHS,
        n_centroids: int = N_CENTROIDS,
        gamma: float = RBF_GAMMA,
    ):
        if layout.width <= 0:
            raise DeepTuneError("cannot build a model over an empty space")
        self.layout = layout
        self.widths = tuple(widths)
        self.n_centroids = n_centroids
        self.gamma = gamma
        self.dropout_rate = dropout
        self.rng = np.random.default_rng(seed)
        in_dim = layout.width
        self.trunk: list[tuple[Dense, ReLU, Dropout]] = []
        for width in self.widths:
            self.trunk.append((Dense(in_dim, width, self.rng), ReLU(), Dropout(dropout)))
            in_dim = width
        self.crash_head = Dense(self.widths[-1], 2, self.rng)
        self.perf_head = Dense(self.widths[-1], 1, self.rng)
        self.rbf_layers = [RBF(n_centroids, w, gamma, self.rng) for w in self.widths]
        self.unc_head = Dense(n_centroids * len(self.widths), 1, self.rng)
        self.trained = False
        self.centroids_ready = False
        self.perf_mean = 0.0
        self.perf_std = 1.0
        self._build_optimizers()

    def _build_optimizers(self) -> None:
        # Centroids get their own, much faster optimizer: they must chase the
        # trunk's drifting latents, and at the shared learning rate they fall
        # behind, letting the set-matching loss grow without bound.
        params = self.params()
        self.adam = Adam(
            {k: v for k, v in params.items() if not k.startswith("rbf")},
            lr=ADAM_LR, beta1=ADAM_BETA1, beta2=ADAM_BETA2,
        )
        self.adam_centroids = Adam(
            {k: v for k, v in params.items() if k.startswith("rbf")},
            lr=CENTROID_LR, beta1=ADAM_BETA1, beta2=ADAM_BETA2,
        )

    def apply_gradients(self, grads: Mapping[str, np.ndarray]) -> None:
        self.adam.step({k: g for k, g in grads.items() if not k.startswith("rbf")})
        self.adam_centroids.step({k: g for k, g in grads.items() if k.startswith("rbf")})

    # -- parameter registry

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, (dense, _, _) in enumerate(self.trunk):
            for name, arr in dense.params().items():
                out[f"trunk{i}.{name}"] = arr
        for name, arr in self.crash_head.params().items():
            out[f"crash.{name}"] = arr
        for name, arr in self.perf_head.params().items():
            out[f"perf.{name}"] = arr
        for i, rbf in enumerate(self.rbf_layers):
            out[f"rbf{i}.centroids"] = rbf.centroids
        for name, arr in self.unc_head.params().items():
            out[f"unc.{name}"] = arr
        return out

    # -- forward passes

    def _forward(self, x: np.ndarray, train: bool):
        """Full forward; returns outputs plus caches needed for backward."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        h = x
        hiddens = []
        trunk_caches = []
        for dense, relu, drop in self.trunk:
            h, c_d = dense.forward(h, train=train, rng=self.rng)
            h, c_r = relu.forward(h, train=train, rng=self.rng)
            h, c_p = drop.forward(h, train=train, rng=self.rng)
            trunk_caches.append((c_d, c_r, c_p))
            hiddens.append(h)
        logits, c_crash = self.crash_head.forward(h, train=train, rng=self.rng)
        y_pred, c_perf = self.perf_head.forward(h, train=train, rng=self.rng)
        phis = []
        rbf_caches = []
        for rbf, hidden in zip(self.rbf_layers, hiddens):
            phi, c = rbf.forward(hidden, train=train, rng=self.rng)
            phis.append(phi)
            rbf_caches.append(c)
        phi_cat = np.concatenate(phis, axis=1)
        log_var, c_unc = self.unc_head.forward(phi_cat, train=train, rng=self.rng)
        return {
            "logits": logits,
            "y_pred": y_pred[:, 0],
            "log_var": log_var[:, 0],
            "hiddens": hiddens,
            "trunk_caches": trunk_caches,
            "crash_cache": c_crash,
            "perf_cache": c_perf,
            "rbf_caches": rbf_caches,
            "unc_cache": c_unc,
        }

    def predict(self, x: np.ndarray) -> Prediction:
        """Deterministic eval-mode prediction for encoded inputs (n, d)."""
        out = self._forward(x, train=False)
        logits = out["logits"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        sigma = np.exp(np.clip(out["log_var"], -LOG_VAR_CLIP, LOG_VAR_CLIP) / 2.0)
        return Prediction(
            crash_prob=probs[:, CRASHED],
            performance=out["y_pred"] * self.perf_std + self.perf_mean,
            uncertainty=sigma * self.perf_std,
        )

    # -- training

    def _init_centroids(self, inputs: np.ndarray) -> None:
        """Seed centroids with jittered latents of known samples."""
        out = self._forward(inputs, train=False)
        for rbf, hidden in zip(self.rbf_layers, out["hiddens"]):
            n, m = hidden.shape[0], rbf.centroids.shape[0]
            if n >= m:  # cover distinct samples when history allows
                idx = self.rng.permutation(n)[:m]
            else:
                idx = self.rng.integers(n, size=m)
            jitter = self.rng.normal(0.0, 0.05, size=rbf.centroids.shape)
            rbf.centroids[...] = hidden[idx] + jitter
        self.centroids_ready = True

    def compute_loss(
        self,
        inputs: np.ndarray,
        labels: np.ndarray,
        targets: np.ndarray,
        ran_mask: np.ndarray,
        train: bool = True,
    ) -> tuple[dict[str, float], dict[str, np.ndarray]]:
        """One forward/backward pass; returns (loss components, gradients)."""
        out = self._forward(inputs, train=train)
        cce, d_logits = crash_cross_entropy(out["logits"], labels)
        reg, d_y, d_s = regression_nll(out["y_pred"], out["log_var"], targets, ran_mask)
        cham_total = 0.0
        cham_grads = []
        for rbf, hidden in zip(self.rbf_layers, out["hiddens"]):
            c_loss, c_grad = chamfer_distance(rbf.centroids, hidden)
            cham_total += c_loss
            cham_grads.append(c_grad)

        grads: dict[str, np.ndarray] = {}
        d_h_last, g = self.crash_head.backward(out["crash_cache"], d_logits)
        for name, arr in g.items():
            grads[f"crash.{name}"] = arr
        dx_perf, g = self.perf_head.backward(out["perf_cache"], d_y[:, None])
        d_h_last = d_h_last + dx_perf
        for name, arr in g.items():
            grads[f"perf.{name}"] = arr
        d_phi, g = self.unc_head.backward(out["unc_cache"], d_s[:, None])
        for name, arr in g.items():
            grads[f"unc.{name}"] = arr
        # Split the uncertainty gradient back to the per-block RBF layers;
        # the chamfer gradient joins at the centroids and goes no further.
        d_hiddens = [np.zeros_like(h) for h in out["hiddens"]]
        offset = 0
        for i, rbf in enumerate(self.rbf_layers):
            width = rbf.centroids.shape[0]
            dz, g = rbf.backward(out["rbf_caches"][i], d_phi[:, offset : offset + width])
            offset += width
            d_hiddens[i] += dz
            grads[f"rbf{i}.centroids"] = g["centroids"] + cham_grads[i]
        d_h = d_h_last + d_hiddens[-1]
        for i in range(len(self.trunk) - 1, -1, -1):
            dense, relu, drop = self.trunk[i]
            c_d, c_r, c_p = out["trunk_caches"][i]
            d_h, _ = drop.backward(c_p, d_h)
            d_h, _ = relu.backward(c_r, d_h)
            d_h, g = dense.backward(c_d, d_h)
            for name, arr in g.items():
                grads[f"trunk{i}.{name}"] = arr
            if i > 0:
                d_h = d_h + d_hiddens[i - 1]
        losses = {
            "total": cce + reg + cham_total,
            "cce": cce,
            "reg": reg,
            "chamfer": cham_total,
        }
        return losses, grads


def build_model(
    space_or_layout: ConfigSpace | EncodingLayout,
    seed: int = 0,
    dropout: float = DROPOUT_RATE,
) -> DeepTuneModel:
    """Construct an untrained model over a space (or a prebuilt layout)."""
    layout = (
        space_or_layout
        if isinstance(space_or_layout, EncodingLayout)
        else EncodingLayout(space_or_layout)
    )
    return DeepTuneModel(layout, seed=seed, dropout=dropout)


def train(model: DeepTuneModel, ts: TrainingSet, epochs: int = EPOCHS_PER_ROUND) -> list[float]:
    """Fit the model for ``epochs`` passes over the training set.

    Optimizer state persists across calls, so repeated invocations continue
    training incrementally.  Objective values are re-normalized to z-scores
    of the current set on every call.  Runs full-batch below 512 samples and
    shuffled 128-sample mini-batches above.  Returns mean total loss per
    epoch; raises TrainingDiverged if the loss leaves the reals.
    """
    n = len(ts)
    if n == 0:
        raise DeepTuneError("cannot train on an empty training set")
    if ts.inputs.shape[1] != model.layout.width:
        raise DeepTuneError(
            f"training inputs have width {ts.inputs.shape[1]}, model expects {model.layout.width}"
        )
    ran = ~ts.crashed
    vals = ts.objectives[ran]
    if vals.size:
        model.perf_mean = float(vals.mean())
        std = float(vals.std())
        model.perf_std = std if std > 1e-12 else 1.0
    targets = np.zeros(n)
    targets[ran] = (ts.objectives[ran] - model.perf_mean) / model.perf_std
    labels = np.where(ts.crashed, CRASHED, RAN)
    if not model.centroids_ready:
        model._init_centroids(ts.inputs)
    epoch_losses = []
    for _ in range(epochs):
        if n < FULL_BATCH_LIMIT:
            batches = [np.arange(n)]
        else:
            perm = model.rng.permutation(n)
            batches = [perm[i : i + MINI_BATCH] for i in range(0, n, MINI_BATCH)]
        total = 0.0
        for idx in batches:
            losses, grads = model.compute_loss(
                ts.inputs[idx], labels[idx], targets[idx], ran[idx], train=True
            )
            if not np.isfinite(losses["total"]):
                raise TrainingDiverged(
                    "training loss is non-finite: "
                    + ", ".join(f"{k}={v:.6g}" for k, v in losses.items())
                )
            model.apply_gradients(grads)
            total += losses["total"] * len(idx)
        epoch_losses.append(total / n)
    model.trained = True
    return epoch_losses


# ---------------------------------------------------------------------------
# Scoring and selection


def dissimilarity(candidates: np.ndarray, known: np.ndarray) -> np.ndarray:
    """How far each candidate sits from its nearest known sample, in [0, 1).

    ds = 1 - 1/(1 + d^2) with d the Euclidean distance to the nearest known
    encoded configuration.  The known set must be non-empty: with no history
    there is no meaningful notion of novelty.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if known is None or len(known) == 0:
        raise DeepTuneError("dissimilarity needs at least one known sample")
    known = np.atleast_2d(np.asarray(known, dtype=float))
    d2 = (
        (candidates**2).sum(axis=1)[:, None]
        + (known**2).sum(axis=1)[None, :]
        - 2.0 * candidates @ known.T
    )
    d2 = np.maximum(d2.min(axis=1), 0.0)
    return 1.0 - 1.0 / (1.0 + d2)


def normalize_uncertainty(sigma: np.ndarray) -> np.ndarray:
    """Min-max normalize predicted deviations across a candidate pool.

    A pool with (numerically) constant uncertainty normalizes to all zeros
    rather than amplifying float noise into a full-range ranking.
    """
    sigma = np.asarray(sigma, dtype=float)
    lo, hi = float(sigma.min()), float(sigma.max())
    span = hi - lo
    if span <= 1e-12 * max(1.0, abs(hi)):
        return np.zeros_like(sigma)
    return (sigma - lo) / span


def score_candidates(ds: np.ndarray, sigma: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Final selection score: alpha * dissimilarity + (1-alpha) * normalized uncertainty."""
    if not 0.0 <= alpha <= 1.0:
        raise DeepTuneError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * np.asarray(ds, dtype=float) + (1.0 - alpha) * normalize_uncertainty(sigma)


def select_next(
    model: DeepTuneModel,
    space: ConfigSpace,
    known_keys: set,
    known_encoded: np.ndarray | None,
    rng: np.random.Generator,
    scoring: ScoringParams = ScoringParams(),
) -> dict[str, Any]:
    """Choose the next configuration to evaluate.

    Before the model has been trained (or with empty history) this is a
    uniform draw.  Otherwise: sample a pool of not-yet-evaluated candidates,
    drop those whose predicted crash probability exceeds the gate (keeping
    the single least-crashy candidate if that empties the pool), and return
    the candidate with the best combined dissimilarity/uncertainty score.
    """
    size = space.size()
    if size is not None and len(known_keys) >= size:
        raise SpaceExhausted(f"all {size} distinct configurations have been evaluated")
    if not model.trained or not known_keys:
        for _ in range(10_000):
            config = sample_uniform(space, rng)
            if config_key(space, config) not in known_keys:
                return config
        raise SpaceExhausted("could not draw an unevaluated configuration")

    pool: list[dict[str, Any]] = []
    seen = set(known_keys)
    for _ in range(50):
        for config in sample_batch(space, rng, scoring.pool_size):
            key = config_key(space, config)
            if key in seen:
                continue
            seen.add(key)
            pool.append(config)
        if len(pool) >= scoring.pool_size or (
            size is not None and len(pool) >= size - len(known_keys)
        ):
            break
    if not pool:
        raise SpaceExhausted("could not assemble a pool of unevaluated candidates")
    pool = pool[: scoring.pool_size]

    encoded = model.layout.encode_batch(pool)
    pred = model.predict(encoded)
    kept = np.flatnonzero(pred.crash_prob <= scoring.crash_gate)
    if kept.size == 0:
        kept = np.array([int(np.argmin(pred.crash_prob))])
    ds = dissimilarity(encoded[kept], known_encoded)
    scores = score_candidates(ds, pred.uncertainty[kept], scoring.alpha)
    return pool[int(kept[int(np.argmax(scores))])]


# ---------------------------------------------------------------------------
# Analysis utilities


IMPORTANCE_MIN_SAMPLES = 20
IMPORTANCE_SHUFFLES = 50


def feature_importance(
    model: DeepTuneModel,
    inputs: np.ndarray,
    objectives: np.ndarray,
    rng: np.random.Generator,
    shuffles: int = IMPORTANCE_SHUFFLES,
) -> list[tuple[str, float]]:
    """Permutation importance of each parameter for performance prediction.

    For every parameter, its feature block is shuffled across samples
    ``shuffles`` times; the importance is the mean increase in prediction
    error (normalized MAE), clamped at zero.  Requires at least 20 ran
    samples.  Returns (name, importance) pairs sorted descending.
    """
    inputs = np.asarray(inputs, dtype=float)
    objectives = np.asarray(objectives, dtype=float)
    n = inputs.shape[0]
    if n < IMPORTANCE_MIN_SAMPLES:
        raise DeepTuneError(
            f"feature importance needs at least {IMPORTANCE_MIN_SAMPLES} ran samples, got {n}"
        )
    targets = (objectives - model.perf_mean) / model.perf_std

    def norm_mae(x: np.ndarray, reps: int) -> float:
        pred = model.predict(x)
        normed = (pred.performance - model.perf_mean) / model.perf_std
        return float(np.abs(normed - np.tile(targets, reps)).mean())

    base = norm_mae(inputs, 1)
    ranking = []
    for entry in model.layout.entries:
        stacked = np.tile(inputs, (shuffles, 1))
        for k in range(shuffles):
            perm = rng.permutation(n)
            rows = slice(k * n, (k + 1) * n)
            stacked[rows, entry.start : entry.stop] = inputs[perm, entry.start : entry.stop]
        increase = norm_mae(stacked, shuffles) - base
        ranking.append((entry.name, max(increase, 0.0)))
    ranking.sort(key=lambda pair: (-pair[1], pair[0]))
    return ranking


def cross_similarity(importances: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise similarity of tasks from their feature-importance vectors.

    Vectors are L2-normalized (zero vectors stay zero), then
    S[i, j] = 1 / (1 + ||v_i - v_j||).  Identical profiles score 1.0.
    """
    rows = []
    for v in importances:
        v = np.asarray(v, dtype=float)
        norm = np.linalg.norm(v)
        rows.append(v / norm if norm > 0 else v)
    if not rows:
        raise DeepTuneError("cross_similarity needs at least one importance vector")
    lengths = {r.shape for r in rows}
    if len(lengths) > 1:
        raise DeepTuneError(
            f"importance vectors must share one length, got {sorted(lengths)}"
        )
    mat = np.stack(rows)
    t = mat.shape[0]
    out = np.empty((t, t))
    for i in range(t):
        for j in range(t):
            out[i, j] = 1.0 / (1.0 + np.linalg.norm(mat[i] - mat[j]))
    return out


def multi_metric_score(
    metrics: Mapping[str, float],
    stats: Mapping[str, tuple[float, float]],
    weights: Mapping[str, float],
) -> float:
    """Weighted sum of min-max normalized metrics.

    ``stats`` maps metric name to its observed (min, max); a metric whose
    observed range is empty normalizes to 0.  Weights carry sign: metrics
    being minimized enter with negative weight.
    """
    total = 0.0
    for name, weight in weights.items():
        if name not in metrics:
            raise DeepTuneError(f"metric {name!r} missing from trial metrics")
        lo, hi = stats.get(name, (0.0, 0.0))
        span = hi - lo
        normed = (metrics[name] - lo) / span if span > 0 else 0.0
        total += weight * normed
    return total


# ---------------------------------------------------------------------------
# Serialization / transfer


def save_model(model: DeepTuneModel) -> str:
    """Serialize the model (weights + normalization + layout identity) to JSON."""
    sections = {
        "trunk": [dense.to_dict() for dense, _, _ in model.trunk],
        "crash_head": model.crash_head.to_dict(),
        "perf_head": model.perf_head.to_dict(),
        "rbf": [rbf.to_dict() for rbf in model.rbf_layers],
        "unc_head": model.unc_head.to_dict(),
    }
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layout_fingerprint": model.layout.fingerprint(),
        "widths": list(model.widths),
        "n_centroids": model.n_centroids,
        "gamma": model.gamma,
        "dropout": model.dropout_rate,
        "perf_mean": model.perf_mean,
        "perf_std": model.perf_std,
        "trained": model.trained,
        "centroids_ready": model.centroids_ready,
        "sections": sections,
    }
    return json.dumps(doc)


def warm_start(doc_text: str, layout: EncodingLayout, seed: int = 0) -> DeepTuneModel:
    """Rebuild a saved model for a space with an identical encoding layout.

    The layout fingerprint must match the one stored in the document; a
    mismatch means the feature vectors are not interchangeable and raises
    DeepTuneError listing both fingerprints.  Optimizer state starts fresh.
    """
    try:
        doc = json.loads(doc_text)
    except json.JSONDecodeError as exc:
        raise DeepTuneError(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise DeepTuneError("model document has wrong or missing format marker")
    if doc.get("version") != MODEL_VERSION:
        raise DeepTuneError(f"unsupported model document version {doc.get('version')!r}")
    want = layout.fingerprint()
    got = doc.get("layout_fingerprint")
    if got != want:
        raise DeepTuneError(
            "encoding layout mismatch: model was trained for layout "
            f"{got} but the target space has layout {want}"
        )
    model = DeepTuneModel(
        layout,
        seed=seed,
        dropout=doc["dropout"],
        widths=tuple(doc["widths"]),
        n_centroids=doc["n_centroids"],
        gamma=doc["gamma"],
    )
    sections = doc["sections"]
    try:
        for block, ldoc in zip(model.trunk, sections["trunk"], strict=True):
            loaded = _layer_from_dict(ldoc)
            block[0].weights = loaded.weights
            block[0].bias = loaded.bias
        for attr, key in (("crash_head", "crash_head"), ("perf_head", "perf_head"), ("unc_head", "unc_head")):
            loaded = _layer_from_dict(sections[key])
            getattr(model, attr).weights = loaded.weights
            getattr(model, attr).bias = loaded.bias
        for rbf, ldoc in zip(model.rbf_layers, sections["rbf"], strict=True):
            loaded = _layer_from_dict(ldoc)
            rbf.centroids = loaded.centroids
    except (KeyError, ValueError, NNError) as exc:
        raise DeepTuneError(f"model document sections are malformed: {exc}") from exc
    model.perf_mean = doc["perf_mean"]
    model.perf_std = doc["perf_std"]
    model.trained = doc["trained"]
    model.centroids_ready = doc["centroids_ready"]
    # Parameter identities changed; rebuild the optimizer over the new arrays.
    model._build_optimizers()
    return model
