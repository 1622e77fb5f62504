"""Small composite networks built from :mod:`dmca.nn.layers`."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from dmca.errors import ShapeError
from dmca.nn.layers import LSTM, Dense, Recording, as_floats
from dmca.nn.params import ParamSet


class MLP:
    """Stack of dense layers. ``sizes`` includes the input width."""

    def __init__(
        self,
        sizes: Sequence[int],
        activations: Sequence[str],
        rng: np.random.Generator | None = None,
        params: ParamSet | None = None,
        prefix: str = "fc",
    ) -> None:
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = params if params is not None else ParamSet()
        self.sizes = tuple(sizes)
        self.layers = [
            Dense(self.params, f"{prefix}{k}", n_in, n_out, act, rng)
            for k, (n_in, n_out, act) in enumerate(zip(sizes[:-1], sizes[1:], activations))
        ]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Recording]:
        recs = []
        for layer in self.layers:
            x, rec = layer.forward(x)
            recs.append(rec)
        return x, Recording(layers=recs)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)[0]
        return x

    def backward(self, rec: Recording, dy: np.ndarray, dz_out: np.ndarray | None = None) -> np.ndarray:
        """``dz_out`` is added to the gradient at the last layer's pre-activation."""
        recs = rec.consume()["layers"]
        dy = self.layers[-1].backward(recs[-1], dy, dz_out)
        for layer, r in zip(reversed(self.layers[:-1]), reversed(recs[:-1])):
            dy = layer.backward(r, dy)
        return dy

    @staticmethod
    def output_logits(rec: Recording) -> np.ndarray:
        """Pre-activation of the last layer from an unspent recording."""
        return rec.cache["layers"][-1].cache["z"]


class LstmRegressor:
    """Scalar sequence regressor used by the channel predictor.

    input dense (1 -> units, linear) applied per step, one LSTM layer, and an
    output dense (units -> 1, linear) that reads the cell state of the last step.
    """

    def __init__(self, time_step: int, units: int, rng: np.random.Generator | None = None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self.time_step, self.units = time_step, units
        self.params = ParamSet()
        self.inp = Dense(self.params, "in", 1, units, "linear", rng)
        self.cell = LSTM(self.params, "lstm", units, units, rng)
        self.out = Dense(self.params, "out", units, 1, "linear", rng)

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, Recording]:
        X = as_floats(X)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.time_step:
            raise ShapeError(f"expected (batch, {self.time_step}) inputs, got {X.shape}")
        batch = X.shape[0]
        e, rec_in = self.inp.forward(X.reshape(-1, 1))
        _, cs, rec_cell = self.cell.forward(e.reshape(batch, self.time_step, self.units))
        y, rec_out = self.out.forward(cs[:, -1])
        return y[:, 0], Recording(inp=rec_in, cell=rec_cell, out=rec_out, batch=batch)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[0]

    def backward(self, rec: Recording, dy: np.ndarray) -> np.ndarray:
        c = rec.consume()
        batch = c["batch"]
        dc_last = self.out.backward(c["out"], np.asarray(dy, dtype=np.float64).reshape(batch, 1))
        dcs = np.zeros((batch, self.time_step, self.units))
        dcs[:, -1] = dc_last
        de = self.cell.backward(c["cell"], dcs=dcs)
        dX = self.inp.backward(c["inp"], de.reshape(-1, self.units))
        return dX.reshape(batch, self.time_step)
