"""Minimal feed-forward neural network library on numpy.

Layers implement ``forward(x, train, rng) -> (y, cache)`` and
``backward(cache, dy) -> (dx, grads)`` with gradients derived by hand; the
test suite checks every layer against central finite differences.  Caches
are explicit values rather than hidden layer state, so a forward pass in
eval mode is a pure function of its inputs.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

import numpy as np


class NNError(ValueError):
    """Structural problem: incompatible shapes, bad documents, bad gradients."""


class Dense:
    """Affine layer y = x @ W + b with He-scaled initialization."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        if in_dim <= 0 or out_dim <= 0:
            raise NNError(f"dense dims must be positive, got {in_dim}x{out_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weights = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, out_dim))
        self.bias = np.zeros(out_dim)

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise NNError(f"dense expected (n, {self.in_dim}) input, got {x.shape}")
        return x @ self.weights + self.bias, x

    def backward(self, cache, dy):
        x = cache
        if dy.shape != (x.shape[0], self.out_dim):
            raise NNError(f"dense backward: upstream {dy.shape} does not match cache {x.shape}")
        dx = dy @ self.weights.T
        return dx, {"weights": x.T @ dy, "bias": dy.sum(axis=0)}

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "dense",
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }


class ReLU:
    """Elementwise max(x, 0)."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=float)
        return np.maximum(x, 0.0), x

    def backward(self, cache, dy):
        return dy * (cache > 0.0), {}

    def to_dict(self) -> dict[str, Any]:
        return {"type": "relu"}


class Dropout:
    """Inverted dropout: scales kept units by 1/(1-rate) so eval needs no rescale."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise NNError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=float)
        if not train or self.rate == 0.0:
            return x, None
        if rng is None:
            raise NNError("dropout in train mode needs an rng")
        mask = rng.random(x.shape) >= self.rate
        scale = 1.0 / (1.0 - self.rate)
        return x * mask * scale, mask * scale

    def backward(self, cache, dy):
        if cache is None:
            return dy, {}
        return dy * cache, {}

    def to_dict(self) -> dict[str, Any]:
        return {"type": "dropout", "rate": self.rate}


class RBF:
    """Radial basis layer: unit j emits exp(-||z - c_j||^2 / (2 gamma^2)).

    Activations lie in (0, 1], equal 1 exactly at a centroid, and decay
    monotonically with distance; far inputs produce near-zero activations,
    which is what makes the layer useful as a familiarity detector.
    """

    def __init__(self, n_centroids: int, in_dim: int, gamma: float, rng: np.random.Generator):
        if n_centroids <= 0 or in_dim <= 0:
            raise NNError(f"rbf dims must be positive, got {n_centroids}x{in_dim}")
        if gamma <= 0:
            raise NNError(f"rbf gamma must be positive, got {gamma}")
        self.in_dim = in_dim
        self.out_dim = n_centroids
        self.gamma = gamma
        self.centroids = rng.normal(0.0, 1.0, size=(n_centroids, in_dim))

    def params(self) -> dict[str, np.ndarray]:
        return {"centroids": self.centroids}

    def sq_dists(self, z: np.ndarray) -> np.ndarray:
        """Pairwise squared distances (n, m) between inputs and centroids."""
        z = np.asarray(z, dtype=float)
        d2 = (
            (z**2).sum(axis=1)[:, None]
            + (self.centroids**2).sum(axis=1)[None, :]
            - 2.0 * z @ self.centroids.T
        )
        return np.maximum(d2, 0.0)

    def forward(self, z, train=False, rng=None):
        z = np.asarray(z, dtype=float)
        if z.ndim != 2 or z.shape[1] != self.in_dim:
            raise NNError(f"rbf expected (n, {self.in_dim}) input, got {z.shape}")
        phi = np.exp(-self.sq_dists(z) / (2.0 * self.gamma**2))
        return phi, (z, phi)

    def backward(self, cache, dy):
        # d phi_ij / d z_i = phi_ij * (c_j - z_i) / gamma^2
        # d phi_ij / d c_j = phi_ij * (z_i - c_j) / gamma^2
        z, phi = cache
        g = dy * phi / self.gamma**2
        row = g.sum(axis=1, keepdims=True)
        col = g.sum(axis=0)[:, None]
        dz = g @ self.centroids - row * z
        dc = g.T @ z - col * self.centroids
        return dz, {"centroids": dc}

    def to_dict(self) -> dict[str, Any]:
        return {"type": "rbf", "gamma": self.gamma, "centroids": self.centroids.tolist()}


Layer = Dense | ReLU | Dropout | RBF


def _layer_from_dict(doc: Mapping[str, Any]) -> Layer:
    kind = doc.get("type")
    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    if kind == "dense":
        weights = np.array(doc["weights"], dtype=float)
        if weights.ndim != 2:
            raise NNError("dense weights must be a 2-d array")
        layer = Dense(weights.shape[0], weights.shape[1], rng)
        layer.weights = weights
        bias = np.array(doc["bias"], dtype=float)
        if bias.shape != (weights.shape[1],):
            raise NNError("dense bias does not match weight columns")
        layer.bias = bias
        return layer
    if kind == "relu":
        return ReLU()
    if kind == "dropout":
        return Dropout(doc["rate"])
    if kind == "rbf":
        centroids = np.array(doc["centroids"], dtype=float)
        if centroids.ndim != 2:
            raise NNError("rbf centroids must be a 2-d array")
        layer = RBF(centroids.shape[0], centroids.shape[1], doc["gamma"], rng)
        layer.centroids = centroids
        return layer
    raise NNError(f"unknown layer type {kind!r}")


class Network:
    """A layer pipeline with dimension checking at construction."""

    def __init__(self, layers: list[Layer]):
        width = None
        for i, layer in enumerate(layers):
            in_dim = getattr(layer, "in_dim", None)
            if in_dim is not None:
                if width is not None and width != in_dim:
                    raise NNError(
                        f"layer {i} expects input width {in_dim} but receives {width}"
                    )
                width = layer.out_dim
        self.layers = list(layers)

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out[f"layer{i}.{name}"] = arr
        return out

    def forward(self, x, train=False, rng=None):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, train=train, rng=rng)
            caches.append(cache)
        return x, caches

    def backward(self, caches, dy):
        """Propagate an upstream gradient; returns (dx, grads keyed like params)."""
        if len(caches) != len(self.layers):
            raise NNError(
                f"stale cache: {len(caches)} entries for {len(self.layers)} layers"
            )
        grads: dict[str, np.ndarray] = {}
        for i in range(len(self.layers) - 1, -1, -1):
            dy, layer_grads = self.layers[i].backward(caches[i], dy)
            for name, g in layer_grads.items():
                grads[f"layer{i}.{name}"] = g
        return dy, grads


class Adam:
    """Adam optimizer with persistent first/second moment state.

    ``params`` is a name -> array mapping; arrays are updated in place so
    layers see the new values without re-wiring.
    """

    def __init__(self, params: Mapping[str, np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        for name, g in grads.items():
            if name not in self.params:
                raise NNError(f"gradient for unknown parameter {name!r}")
            if not np.all(np.isfinite(g)):
                raise NNError(f"non-finite gradient for parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            self.params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


WEIGHTS_FORMAT = "cfgtune-weights"
WEIGHTS_VERSION = 1


def save_weights(layers: list[Layer]) -> str:
    """Serialize layers to a JSON document; round-trips float64 exactly."""
    doc = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "layer_count": len(layers),
        "layers": [layer.to_dict() for layer in layers],
    }
    return json.dumps(doc)


def load_weights(text: str) -> list[Layer]:
    """Inverse of save_weights; raises NNError on malformed documents."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NNError(f"weights document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != WEIGHTS_FORMAT:
        raise NNError("weights document has wrong or missing format marker")
    if doc.get("version") != WEIGHTS_VERSION:
        raise NNError(f"unsupported weights document version {doc.get('version')!r}")
    layers_doc = doc.get("layers")
    if not isinstance(layers_doc, list):
        raise NNError("weights document missing 'layers' list")
    if doc.get("layer_count") != len(layers_doc):
        raise NNError(
            f"weights document declares {doc.get('layer_count')} layers "
            f"but contains {len(layers_doc)}"
        )
    return [_layer_from_dict(d) for d in layers_doc]
