"""Dynamic multi-channel access laboratory: environment, predictor, agent, baselines, metrics."""

__version__ = "0.1.0"
