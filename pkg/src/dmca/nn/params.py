"""Named parameter containers and the textual checkpoint format.

Checkpoint layout (UTF-8 text, one record per parameter)::

    # dmca-params v1
    # <free-form metadata lines, e.g. config=ab12cd seed=3>
    param <name> <dim0>,<dim1>,...
    <values in C order, space separated, Python repr precision>

Scalars use an empty shape field (``param bias ``). Values are written with
``repr`` so a load after save restores bit-identical arrays.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterator

import numpy as np

from dmca.errors import CheckpointError

CHECKPOINT_HEADER = "# dmca-params v1"


class ParamSet:
    """Ordered mapping of parameter name to (value, gradient) array pairs."""

    def __init__(self) -> None:
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._values:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=np.float64)
        self._values[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def names(self) -> list[str]:
        return list(self._values)

    def items(self):
        return self._values.items()

    def size(self) -> int:
        return int(sum(v.size for v in self._values.values()))

    def zero_grad(self) -> None:
        for g in self._grads.values():
            g.fill(0.0)

    def grads_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self._grads.values())

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self._grads.values())))

    def swap_values(self, values: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Replace the value arrays wholesale; returns the previous ones."""
        old = self._values
        self._values = dict(values)
        return old

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for name, value in self._values.items():
            out.add(name, value.copy())
        return out

    def assign(self, other: "ParamSet") -> None:
        """Copy values from ``other`` in place (shapes must agree)."""
        for name, value in self._values.items():
            src = other[name]
            if src.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {value.shape}")
            value[...] = src

    def blend_from(self, online: "ParamSet", tau: float) -> None:
        """Soft update in place: self <- tau * online + (1 - tau) * self."""
        for name, value in self._values.items():
            value *= 1.0 - tau
            value += tau * online[name]

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        lines = [CHECKPOINT_HEADER]
        if meta:
            lines.append("# " + " ".join(f"{k}={v}" for k, v in meta.items()))
        for name, value in self._values.items():
            shape = ",".join(str(d) for d in value.shape)
            lines.append(f"param {name} {shape}")
            lines.append(" ".join(repr(float(x)) for x in value.ravel()))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ParamSet":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"checkpoint not found: {path}")
        lines = path.read_text().splitlines()
        if not lines or lines[0].strip() != CHECKPOINT_HEADER:
            raise CheckpointError(f"{path}: missing '{CHECKPOINT_HEADER}' header")
        out = cls()
        body = [ln for ln in lines[1:] if not ln.startswith("#")]
        if len(body) % 2:
            raise CheckpointError(f"{path}: truncated parameter record")
        for head, data in zip(body[0::2], body[1::2]):
            parts = head.split(" ")
            if len(parts) != 3 or parts[0] != "param":
                raise CheckpointError(f"{path}: bad record header {head!r}")
            shape = tuple(int(d) for d in parts[2].split(",") if d)
            values = np.array([float(x) for x in data.split()], dtype=np.float64)
            if values.size != int(np.prod(shape, dtype=int)):
                raise CheckpointError(f"{path}: {parts[1]} expects {shape}, got {values.size} values")
            out.add(parts[1], values.reshape(shape))
        return out

    @staticmethod
    def read_meta(path: str | Path) -> dict[str, str]:
        meta: dict[str, str] = {}
        for line in Path(path).read_text().splitlines()[1:]:
            if not line.startswith("#"):
                break
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        return meta
