"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

# Finite differences of a float64 loss lose ~eps_mach*|L|/step to cancellation,
# which swamps gradient entries near 1e-8; the numeric side runs in long double.
ORACLE_DTYPE = np.longdouble


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(loss: Callable[[], float], value: np.ndarray, epsilon: float) -> np.ndarray:
    """Perturb ``value`` in place element by element; restores it afterwards."""
    out = np.zeros(value.shape, dtype=value.dtype)
    flat, gflat = value.reshape(-1), out.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + epsilon
        up = loss()
        flat[j] = orig - epsilon
        down = loss()
        flat[j] = orig
        gflat[j] = (up - down) / (2 * epsilon)
    return out


def grad_check(model, inputs: np.ndarray, targets: np.ndarray | None = None, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    The loss is ``0.5 * sum((model(inputs) - targets) ** 2)`` with zero
    targets by default. ``model`` needs ``params``, ``forward`` and
    ``backward`` in the style of :class:`dmca.nn.models.MLP`.
    """
    params = model.params
    if params.size() >= 10_000:
        raise ValueError("grad_check is meant for models under 10^4 parameters")
    inputs = np.asarray(inputs, dtype=np.float64)
    y, rec = model.forward(inputs)
    targets = np.zeros_like(y) if targets is None else np.asarray(targets, dtype=np.float64)
    params.zero_grad()
    model.backward(rec, y - targets)

    wide = {n: params[n].astype(ORACLE_DTYPE) for n in params}
    x_wide, t_wide = inputs.astype(ORACLE_DTYPE), targets.astype(ORACLE_DTYPE)

    def loss():
        r = model(x_wide) - t_wide
        return 0.5 * np.sum(r * r)

    original = params.swap_values(wide)
    worst = 0.0
    try:
        for name in params:
            numeric = numeric_gradient(loss, wide[name], epsilon).astype(np.float64)
            err = relative_error(params.grad(name), numeric)
            worst = max(worst, float(np.max(err, initial=0.0)))
    finally:
        params.swap_values(original)
    return worst
