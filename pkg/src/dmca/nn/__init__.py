"""Minimal float64 differentiable-computation core."""

from dmca.nn.gradcheck import grad_check, numeric_gradient, relative_error
from dmca.nn.layers import ACTIVATIONS, LSTM, Dense, LstmCellState, Recording
from dmca.nn.models import MLP, LstmRegressor
from dmca.nn.optim import SGD, Adam, Optimizer, OptimizerState, make_optimizer
from dmca.nn.params import ParamSet

__all__ = [
    "ACTIVATIONS",
    "Adam",
    "Dense",
    "LSTM",
    "LstmCellState",
    "LstmRegressor",
    "MLP",
    "Optimizer",
    "OptimizerState",
    "ParamSet",
    "Recording",
    "SGD",
    "grad_check",
    "make_optimizer",
    "numeric_gradient",
    "relative_error",
]
