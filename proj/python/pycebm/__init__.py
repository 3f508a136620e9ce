"""Python access to the conjugate energy-based model library."""

from ._core import (
    ConfigError,
    DivergenceError,
    DomainError,
    FormatError,
    Model,
    NonFiniteError,
    auroc,
    build_model,
    echo_config,
    evaluate,
    gaussian_log_density,
    gen_synthetic,
    knn_same_class_fraction,
    load_model,
    log_normalizer_b,
    mean_to_natural,
    natural_to_mean,
    sample,
    train,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "DomainError",
    "FormatError",
    "Model",
    "NonFiniteError",
    "auroc",
    "build_model",
    "echo_config",
    "evaluate",
    "gaussian_log_density",
    "gen_synthetic",
    "knn_same_class_fraction",
    "load_model",
    "log_normalizer_b",
    "mean_to_natural",
    "natural_to_mean",
    "sample",
    "train",
]
