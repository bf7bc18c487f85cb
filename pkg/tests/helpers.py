"""Shared utilities for the test suite: finite-difference oracles and toy spaces."""

from __future__ import annotations

import numpy as np

from cfgtune.space import ConfigSpace, ParameterDef


def finite_difference(scalar_fn, arrays: dict[str, np.ndarray], step: float = 1e-5):
    """Central-difference gradients of ``scalar_fn()`` w.r.t. each array entry.

    ``arrays`` maps names to the live parameter arrays the function reads;
    entries are perturbed in place and restored, so the function must
    re-read them on every call.
    """
    grads = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr, dtype=float)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = scalar_fn()
            flat[i] = orig - step
            lo = scalar_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads


def assert_grads_close(analytic: dict, numeric: dict, rtol: float = 1e-4, atol: float = 1e-7):
    """Relative-error comparison with a small absolute floor for near-zero entries."""
    assert set(analytic) == set(numeric)
    for name in analytic:
        a = np.asarray(analytic[name], dtype=float)
        n = np.asarray(numeric[name], dtype=float)
        assert a.shape == n.shape, f"{name}: shape {a.shape} vs {n.shape}"
        err = np.abs(a - n)
        tol = atol + rtol * np.abs(n)
        worst = (err - tol).max()
        assert np.all(err <= tol), f"{name}: worst excess {worst:.3e}"


def mixed_space() -> ConfigSpace:
    """One parameter of every kind, spread across stages."""
    return ConfigSpace(
        params=(
            ParameterDef(name="cont", kind="continuous", stage="run", default=0.5, bounds=(0.0, 1.0)),
            ParameterDef(name="count", kind="integer", stage="run", default=10, bounds=(0, 20)),
            ParameterDef(name="big", kind="integer", stage="boot", default=1000, bounds=(1, 100000)),
            ParameterDef(name="flag", kind="boolean", stage="compile", default=False),
            ParameterDef(name="mode", kind="categorical", stage="run", default="a", choices=("a", "b", "c")),
        )
    )


def tiny_space() -> ConfigSpace:
    """Two booleans: smallest space where search behavior is still visible."""
    return ConfigSpace(
        params=(
            ParameterDef(name="x", kind="boolean", stage="run", default=False),
            ParameterDef(name="y", kind="boolean", stage="run", default=False),
        )
    )
