"""Search strategies: random, grid, GP-based Bayesian, and the neural surrogate.

Every strategy exposes ``propose(history) -> config`` and
``observe(TrialResult)``; the orchestrator alternates the two.  Except for
the documented random-strategy fallback, propose never returns a
configuration that has already been evaluated.  Model fitting happens inside
propose, so per-iteration propose times capture the full algorithm cost.
"""

from __future__ import annotations

import logging
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.spatial.distance import cdist
from scipy.stats import norm

from . import deeptune
from .deeptune import ScoringParams, TrainingSet, build_model, select_next, warm_start
from .harness import TrialResult, objective_value, update_metric_stats
from .space import (
    ConfigSpace,
    EncodingLayout,
    SpaceError,
    SpaceExhausted,
    config_key,
    sample_batch,
    sample_uniform,
)

log = logging.getLogger(__name__)

STRATEGY_NAMES = ("random", "grid", "bayes", "deeptune")

RANDOM_REJECTION_ATTEMPTS = 100
GRID_MAX_LEVELS = 10
GP_POOL_SIZE = 500
GP_MIN_SAMPLES = 3
GP_LENGTH_SCALE = 1.0
GP_SIGNAL_VAR = 1.0
GP_NOISE_VAR = 1e-2
GP_MAX_JITTER = 1e-4


class Strategy:
    """Shared bookkeeping: trial list, dedup keys, metric stats."""

    name = "base"

    def __init__(self, space: ConfigSpace, objective, rng: np.random.Generator):
        self.space = space
        self.objective = objective
        self.rng = rng
        self.trials: list[TrialResult] = []
        self.known_keys: set = set()
        self.metric_stats: dict[str, tuple[float, float]] = {}

    def observe(self, result: TrialResult) -> None:
        self.trials.append(result)
        self.known_keys.add(config_key(self.space, result.config))
        if result.metrics:
            update_metric_stats(self.metric_stats, result.metrics)

    def propose(self, history: Sequence[TrialResult]) -> dict[str, Any]:
        raise NotImplementedError

    def _objective_of(self, result: TrialResult) -> float:
        return objective_value(result, self.objective, self.metric_stats)

    def _random_novel(self, warn_on_duplicate: bool) -> dict[str, Any]:
        """Uniform draw avoiding evaluated configs via rejection sampling."""
        size = self.space.size()
        exhausted = size is not None and len(self.known_keys) >= size
        if not exhausted:
            for _ in range(RANDOM_REJECTION_ATTEMPTS):
                config = sample_uniform(self.space, self.rng)
                if config_key(self.space, config) not in self.known_keys:
                    return config
        config = sample_uniform(self.space, self.rng)
        if warn_on_duplicate:
            log.warning(
                "random strategy could not find an unevaluated configuration; "
                "proposing a duplicate"
            )
            return config
        raise SpaceExhausted("no unevaluated configurations remain")


class RandomStrategy(Strategy):
    """Uniform sampling; duplicates are rejected best-effort, then accepted with a warning."""

    name = "random"

    def propose(self, history: Sequence[TrialResult]) -> dict[str, Any]:
        return self._random_novel(warn_on_duplicate=True)


class GridStrategy(Strategy):
    """Deterministic sweep over a discretized cross-product of levels.

    Each parameter gets at most 10 levels (all integer values when the range
    is narrow enough; otherwise evenly spaced; continuous always 10), ordered
    with the default first, so the sweep starts from the all-defaults
    configuration and varies the first parameter fastest.  The sequence is a
    pure function of the history length, which makes it restart-stable.
    """

    name = "grid"

    def __init__(self, space, objective, rng):
        super().__init__(space, objective, rng)
        self.levels: list[list[Any]] = [self._levels(p) for p in space.params]
        self.total = 1
        for lv in self.levels:
            self.total *= len(lv)

    @staticmethod
    def _levels(p) -> list[Any]:
        if p.fixed is not None:
            return [p.fixed]
        if p.kind == "boolean":
            values: list[Any] = [False, True]
        elif p.kind == "integer":
            lo, hi = p.bounds
            if hi - lo + 1 <= GRID_MAX_LEVELS:
                values = list(range(int(lo), int(hi) + 1))
            else:
                values = sorted({int(round(v)) for v in np.linspace(lo, hi, GRID_MAX_LEVELS)})
        elif p.kind == "continuous":
            lo, hi = p.bounds
            values = [float(v) for v in np.linspace(lo, hi, GRID_MAX_LEVELS)]
        else:
            values = list(p.choices)
        default = p.default
        if default not in values:
            # keep the level count: the level nearest the default becomes the default
            nearest = min(range(len(values)), key=lambda i: abs(values[i] - default))
            values.pop(nearest)
        else:
            values.remove(default)
        return [default] + values

    def propose(self, history: Sequence[TrialResult]) -> dict[str, Any]:
        index = len(history)
        if index >= self.total:
            raise SpaceExhausted(
                f"grid of {self.total} configurations exhausted after {index} trials"
            )
        config = {}
        for p, levels in zip(self.space.params, self.levels):
            index, pos = divmod(index, len(levels))
            config[p.name] = levels[pos]
        return config


class GaussianProcess:
    """Exact GP regression with fixed hyperparameters (kept deliberately simple).

    Squared-exponential kernel over encoded vectors, unit length scale and
    signal variance, 1e-2 noise variance.  Refit is a full Cholesky solve on
    every call.  Targets are z-scored internally so the fixed unit signal
    variance stays meaningful across objectives of any magnitude.
    """

    def __init__(
        self,
        length_scale: float = GP_LENGTH_SCALE,
        signal_var: float = GP_SIGNAL_VAR,
        noise_var: float = GP_NOISE_VAR,
    ):
        self.length_scale = length_scale
        self.signal_var = signal_var
        self.noise_var = noise_var
        self.x_train: np.ndarray | None = None
        self._factor = None
        self._alpha = None
        self.y_mean = 0.0
        self.y_std = 1.0

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d2 = cdist(a, b, "sqeuclidean")
        return self.signal_var * np.exp(-d2 / (2.0 * self.length_scale**2))

    def fit(self, x: np.ndarray, y: np.ndarray) -> bool:
        """Factor the training kernel; False when even max jitter fails."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        std = float(y.std())
        self.y_std = std if std > 1e-12 else 1.0
        y_n = (y - self.y_mean) / self.y_std
        base = self._kernel(x, x) + self.noise_var * np.eye(len(x))
        jitter = 0.0
        while True:
            try:
                self._factor = cho_factor(base + jitter * np.eye(len(x)), lower=True)
                break
            except LinAlgError:
                jitter = 1e-8 if jitter == 0.0 else jitter * 10.0
                if jitter > GP_MAX_JITTER:
                    self._factor = None
                    return False
        self.x_train = x
        self._alpha = cho_solve(self._factor, y_n)
        return True

    def posterior(self, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at query points."""
        if self._factor is None:
            raise SpaceError("GP queried before a successful fit")
        k_star = self._kernel(self.x_train, np.asarray(xq, dtype=float))
        mu_n = k_star.T @ self._alpha
        v = cho_solve(self._factor, k_star)
        var_n = self.signal_var - np.einsum("ij,ij->j", k_star, v)
        var_n = np.maximum(var_n, 0.0)
        return mu_n * self.y_std + self.y_mean, np.sqrt(var_n) * self.y_std


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    """EI for maximization; exactly zero wherever predicted deviation is zero."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    ei = np.zeros_like(mu)
    positive = sigma > 1e-12
    imp = mu[positive] - best
    z = imp / sigma[positive]
    ei[positive] = imp * norm.cdf(z) + sigma[positive] * norm.pdf(z)
    return ei


class BayesStrategy(Strategy):
    """GP regression + expected improvement over a sampled candidate pool.

    Crashed trials never enter the fit.  With fewer than 3 ran samples, or
    when the kernel cannot be factored even with jitter, proposals fall back
    to uniform random draws.
    """

    name = "bayes"

    def __init__(self, space, objective, rng):
        super().__init__(space, objective, rng)
        self.layout = EncodingLayout(space)
        self.gp = GaussianProcess()

    def _pool(self) -> list[dict[str, Any]]:
        pool: list[dict[str, Any]] = []
        seen = set(self.known_keys)
        for _ in range(50):
            for config in sample_batch(self.space, self.rng, GP_POOL_SIZE):
                key = config_key(self.space, config)
                if key in seen:
                    continue
                seen.add(key)
                pool.append(config)
            if len(pool) >= GP_POOL_SIZE:
                break
            size = self.space.size()
            if size is not None and len(self.known_keys) + len(pool) >= size:
                break
        return pool[:GP_POOL_SIZE]

    def propose(self, history: Sequence[TrialResult]) -> dict[str, Any]:
        ran = [t for t in self.trials if not t.crashed]
        if len(ran) < GP_MIN_SAMPLES:
            return self._random_novel(warn_on_duplicate=False)
        x = self.layout.encode_batch([t.config for t in ran])
        y = np.array([self._objective_of(t) for t in ran])
        if not self.gp.fit(x, y):
            log.warning("GP fit failed at max jitter; falling back to a random proposal")
            return self._random_novel(warn_on_duplicate=False)
        pool = self._pool()
        if not pool:
            raise SpaceExhausted("no unevaluated configurations remain for the GP pool")
        mu, sigma = self.gp.posterior(self.layout.encode_batch(pool))
        ei = expected_improvement(mu, sigma, float(y.max()))
        return pool[int(np.argmax(ei))]


class DeepTuneStrategy(Strategy):
    """Neural-surrogate search: train on all history, then score a candidate pool.

    The model is retrained for a fixed number of epochs inside every propose
    call once data exists, so training cost is part of the measured propose
    time.  Crash labels come from trial outcomes; objective values are
    re-normalized each round.
    """

    name = "deeptune"

    def __init__(
        self,
        space,
        objective,
        rng,
        scoring: ScoringParams = ScoringParams(),
        warm_doc: str | None = None,
    ):
        super().__init__(space, objective, rng)
        self.layout = EncodingLayout(space)
        self.scoring = scoring
        model_seed = int(rng.integers(2**31))
        if warm_doc is not None:
            self.model = warm_start(warm_doc, self.layout, seed=model_seed)
        else:
            self.model = build_model(self.layout, seed=model_seed)
        self.encoded_rows: list[np.ndarray] = []
        self._trained_count = 0

    def observe(self, result: TrialResult) -> None:
        super().observe(result)
        self.encoded_rows.append(self.layout.encode(result.config))

    def _training_set(self) -> TrainingSet:
        inputs = np.stack(self.encoded_rows)
        crashed = np.array([t.crashed for t in self.trials])
        objectives = np.array(
            [np.nan if t.crashed else self._objective_of(t) for t in self.trials]
        )
        return TrainingSet(inputs=inputs, crashed=crashed, objectives=objectives)

    def propose(self, history: Sequence[TrialResult]) -> dict[str, Any]:
        if len(self.trials) > self._trained_count:
            deeptune.train(self.model, self._training_set())
            self._trained_count = len(self.trials)
        known = np.stack(self.encoded_rows) if self.encoded_rows else None
        return select_next(
            self.model, self.space, self.known_keys, known, self.rng, self.scoring
        )


def make_strategy(
    name: str,
    space: ConfigSpace,
    objective,
    rng: np.random.Generator,
    params: Mapping[str, Any] | None = None,
    warm_doc: str | None = None,
) -> Strategy:
    """Construct a strategy by its job-file name."""
    params = dict(params or {})
    if name == "random":
        extra = set(params)
    elif name == "grid":
        extra = set(params)
    elif name == "bayes":
        extra = set(params)
    elif name == "deeptune":
        scoring = ScoringParams(
            alpha=float(params.pop("alpha", ScoringParams.alpha)),
            pool_size=int(params.pop("pool_size", ScoringParams.pool_size)),
            crash_gate=float(params.pop("crash_gate", ScoringParams.crash_gate)),
        )
        extra = set(params)
        if extra:
            raise SpaceError(f"strategy deeptune: unknown parameters {sorted(extra)}")
        return DeepTuneStrategy(space, objective, rng, scoring=scoring, warm_doc=warm_doc)
    else:
        raise SpaceError(f"unknown strategy {name!r}; expected one of {STRATEGY_NAMES}")
    if extra:
        raise SpaceError(f"strategy {name}: unknown parameters {sorted(extra)}")
    if warm_doc is not None:
        raise SpaceError(f"strategy {name} does not support warm_start")
    cls = {"random": RandomStrategy, "grid": GridStrategy, "bayes": BayesStrategy}[name]
    return cls(space, objective, rng)
