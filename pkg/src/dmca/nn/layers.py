"""Dense and LSTM layers with hand-written backward passes.

Every ``forward`` returns its output together with a :class:`Recording`
holding the cached intermediates. A recording may be consumed by exactly one
``backward`` call; gradients are *accumulated* into the owning ParamSet so
several backward passes can be summed before an optimizer step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from dmca.errors import CorruptedStateError, ShapeError, StaleTapeError
from dmca.nn.params import ParamSet


class Recording:
    """Cache of one forward pass. Single use."""

    __slots__ = ("cache", "spent")

    def __init__(self, **cache) -> None:
        self.cache = cache
        self.spent = False

    def consume(self) -> dict:
        if self.spent:
            raise StaleTapeError("backward already ran on this recording")
        self.spent = True
        return self.cache


def _relu(z):
    return np.maximum(z, 0.0)


def as_floats(x) -> np.ndarray:
    """Float array view of ``x``; keeps extended precision if given."""
    x = np.asarray(x)
    return x if np.issubdtype(x.dtype, np.floating) else x.astype(np.float64)


# derivative expressed through the pre-activation z and the output y
ACTIVATIONS = {
    "linear": (lambda z: z, lambda z, y: np.ones_like(z)),
    "relu": (_relu, lambda z, y: (z > 0.0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z, y: 1.0 - y * y),
    "sigmoid": (expit, lambda z, y: y * (1.0 - y)),
}


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Dense:
    """Fully connected layer ``y = act(x @ W + b)`` on row-major batches."""

    def __init__(
        self,
        params: ParamSet,
        name: str,
        n_in: int,
        n_out: int,
        activation: str = "linear",
        rng: np.random.Generator | None = None,
    ) -> None:
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = params
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.w_name, self.b_name = f"{name}.W", f"{name}.b"
        params.add(self.w_name, glorot_uniform(rng, n_in, n_out))
        params.add(self.b_name, np.zeros(n_out))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Recording]:
        x = as_floats(x)
        squeeze = x.ndim == 1
        x2 = x[None, :] if squeeze else x
        if x2.ndim != 2 or x2.shape[1] != self.n_in:
            raise ShapeError(f"dense layer expects {self.n_in} inputs, got shape {x.shape}")
        z = x2 @ self.params[self.w_name] + self.params[self.b_name]
        fn, _ = ACTIVATIONS[self.activation]
        y = fn(z)
        rec = Recording(x=x2, z=z, y=y, squeeze=squeeze)
        return (y[0] if squeeze else y), rec

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, rec: Recording, dy: np.ndarray, dz_extra: np.ndarray | None = None) -> np.ndarray:
        """``dz_extra`` is added to the pre-activation gradient (for penalties on z)."""
        c = rec.consume()
        dy = as_floats(dy)
        if c["squeeze"]:
            dy = dy[None, :]
        _, dfn = ACTIVATIONS[self.activation]
        dz = dy * dfn(c["z"], c["y"])
        if dz_extra is not None:
            dz = dz + np.reshape(dz_extra, dz.shape)
        self.params.grad(self.w_name)[...] += c["x"].T @ dz
        self.params.grad(self.b_name)[...] += dz.sum(axis=0)
        dx = dz @ self.params[self.w_name].T
        return dx[0] if c["squeeze"] else dx


@dataclass
class LstmCellState:
    """State after one LSTM step. Gate arrays are kept for inspection."""

    c: np.ndarray
    h: np.ndarray
    i: np.ndarray | None = None
    f: np.ndarray | None = None
    o: np.ndarray | None = None

    @classmethod
    def zeros(cls, units: int, batch: int | None = None) -> "LstmCellState":
        shape = (units,) if batch is None else (batch, units)
        return cls(c=np.zeros(shape), h=np.zeros(shape))


class LSTM:
    """Single LSTM layer. Gates are packed as [input, forget, output, candidate]."""

    def __init__(
        self,
        params: ParamSet,
        name: str,
        n_in: int,
        units: int,
        rng: np.random.Generator | None = None,
        forget_bias: float = 1.0,
    ) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = params
        self.n_in, self.units = n_in, units
        self.w_name, self.b_name = f"{name}.W", f"{name}.b"
        w = np.concatenate(
            [glorot_uniform(rng, n_in + units, units) for _ in range(4)], axis=1
        )
        b = np.zeros(4 * units)
        b[units : 2 * units] = forget_bias
        params.add(self.w_name, w)
        params.add(self.b_name, b)

    def _gates(self, x, h):
        u = self.units
        z = np.concatenate([x, h], axis=-1) @ self.params[self.w_name] + self.params[self.b_name]
        i = expit(z[..., :u])
        f = expit(z[..., u : 2 * u])
        o = expit(z[..., 2 * u : 3 * u])
        g = np.tanh(z[..., 3 * u :])
        return i, f, o, g

    def step(self, x: np.ndarray, prev: LstmCellState) -> LstmCellState:
        """One recurrence step without recording (inference / inspection)."""
        x = as_floats(x)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"LSTM expects {self.n_in} inputs, got shape {x.shape}")
        if prev.c.shape[-1] != self.units or prev.h.shape[-1] != self.units:
            raise ShapeError(f"LSTM state must have {self.units} units")
        if not (np.all(np.isfinite(prev.c)) and np.all(np.isfinite(prev.h))):
            raise CorruptedStateError("previous LSTM state contains non-finite values")
        i, f, o, g = self._gates(x, prev.h)
        c = f * prev.c + i * g
        h = o * np.tanh(c)
        return LstmCellState(c=c, h=h, i=i, f=f, o=o)

    def forward(
        self, xs: np.ndarray, state: LstmCellState | None = None
    ) -> tuple[np.ndarray, np.ndarray, Recording]:
        """Unroll over ``xs`` of shape (batch, steps, n_in).

        Returns hidden states and cell states, both (batch, steps, units).
        """
        xs = as_floats(xs)
        if xs.ndim != 3 or xs.shape[2] != self.n_in:
            raise ShapeError(f"LSTM expects (batch, steps, {self.n_in}), got {xs.shape}")
        batch, steps, _ = xs.shape
        u = self.units
        if state is None:
            state = LstmCellState.zeros(u, batch)
        if not (np.all(np.isfinite(state.c)) and np.all(np.isfinite(state.h))):
            raise CorruptedStateError("initial LSTM state contains non-finite values")
        dtype = np.result_type(xs, self.params[self.w_name])
        hs = np.empty((batch, steps, u), dtype)
        cs = np.empty((batch, steps, u), dtype)
        gates = np.empty((batch, steps, 4 * u), dtype)
        inputs = np.empty((batch, steps, self.n_in + u), dtype)
        h, c = state.h, state.c
        for t in range(steps):
            inputs[:, t, : self.n_in] = xs[:, t]
            inputs[:, t, self.n_in :] = h
            i, f, o, g = self._gates(xs[:, t], h)
            c = f * c + i * g
            h = o * np.tanh(c)
            gates[:, t] = np.concatenate([i, f, o, g], axis=1)
            hs[:, t], cs[:, t] = h, c
        rec = Recording(inputs=inputs, gates=gates, cs=cs, c0=state.c)
        return hs, cs, rec

    def backward(
        self, rec: Recording, dhs: np.ndarray | None = None, dcs: np.ndarray | None = None
    ) -> np.ndarray:
        """Backpropagation through time over exactly the recorded steps."""
        cache = rec.consume()
        inputs, gates, cs, c0 = cache["inputs"], cache["gates"], cache["cs"], cache["c0"]
        batch, steps, _ = cs.shape
        u = self.units
        W = self.params[self.w_name]
        dW = self.params.grad(self.w_name)
        db = self.params.grad(self.b_name)
        dxs = np.empty((batch, steps, self.n_in))
        dh_next = np.zeros((batch, u))
        dc_next = np.zeros((batch, u))
        for t in reversed(range(steps)):
            i, f, o, g = (gates[:, t, k * u : (k + 1) * u] for k in range(4))
            c = cs[:, t]
            c_prev = cs[:, t - 1] if t > 0 else c0
            tc = np.tanh(c)
            dh = dh_next if dhs is None else dh_next + dhs[:, t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            if dcs is not None:
                dc = dc + dcs[:, t]
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dh * tc * o * (1.0 - o),
                    dc * i * (1.0 - g * g),
                ],
                axis=1,
            )
            dW += inputs[:, t].T @ dz
            db += dz.sum(axis=0)
            dinp = dz @ W.T
            dxs[:, t] = dinp[:, : self.n_in]
            dh_next = dinp[:, self.n_in :]
            dc_next = dc * f
        return dxs
