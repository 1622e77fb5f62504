"""Gradient-descent and adaptive-moment optimizers over a ParamSet."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dmca.errors import PoisonedUpdateError
from dmca.nn.params import ParamSet


@dataclass
class OptimizerState:
    lr: float
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


class Optimizer:
    """Base class: validates gradients and applies the global-norm cap."""

    def __init__(self, params: ParamSet, lr: float, clip_norm: float | None = 5.0) -> None:
        if lr < 0:
            raise ValueError("learning rate must be nonnegative")
        self.params = params
        self.clip_norm = clip_norm
        self.state = OptimizerState(lr=lr)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def _scaled_grads(self) -> dict[str, np.ndarray]:
        if not self.params.grads_finite():
            raise PoisonedUpdateError("non-finite gradient; update skipped")
        scale = 1.0
        if self.clip_norm is not None:
            norm = self.params.grad_norm()
            if norm > self.clip_norm:
                scale = self.clip_norm / norm
        return {n: self.params.grad(n) * scale for n in self.params}

    def step(self) -> None:
        grads = self._scaled_grads()
        self.state.step += 1
        for name, g in grads.items():
            self._apply(name, self.params[name], g)

    def _apply(self, name: str, value: np.ndarray, g: np.ndarray) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def _apply(self, name, value, g):
        value -= self.state.lr * g


class Adam(Optimizer):
    def __init__(
        self,
        params: ParamSet,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: float | None = 5.0,
    ) -> None:
        super().__init__(params, lr, clip_norm)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        for name in params:
            self.state.first[name] = np.zeros_like(params[name])
            self.state.second[name] = np.zeros_like(params[name])

    def _apply(self, name, value, g):
        m, v = self.state.first[name], self.state.second[name]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        t = self.state.step
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        value -= self.state.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, params: ParamSet, lr: float, clip_norm: float | None = 5.0) -> Optimizer:
    if kind == "adam":
        return Adam(params, lr, clip_norm=clip_norm)
    if kind == "sgd":
        return SGD(params, lr, clip_norm=clip_norm)
    raise ValueError(f"unknown optimizer {kind!r}")
