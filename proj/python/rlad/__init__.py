from ._core import (
    ConfigError,
    Error,
    InvalidArgs,
    InvalidSigma,
    MissingFile,
    Series,
    ShapeError,
    ShapeMismatch,
    confusion,
    evaluate,
    f1_from,
    heuristic_potential,
    margin,
    parse_severity,
    propagate_probabilities,
    reward_r1,
    shaped_reward,
    synth_spike_series,
    train,
    update_lambda,
    validate_config,
)

__all__ = [
    "ConfigError",
    "Error",
    "InvalidArgs",
    "InvalidSigma",
    "MissingFile",
    "Series",
    "ShapeError",
    "ShapeMismatch",
    "confusion",
    "evaluate",
    "f1_from",
    "heuristic_potential",
    "margin",
    "parse_severity",
    "propagate_probabilities",
    "reward_r1",
    "shaped_reward",
    "synth_spike_series",
    "train",
    "update_lambda",
    "validate_config",
]
