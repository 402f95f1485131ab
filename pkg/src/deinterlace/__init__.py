"""Video deinterlacing: bidirectional propagation network plus classical baselines."""

from .errors import (
    ConfigError,
    DeinterlaceError,
    FormatError,
    NumericalError,
    ParityError,
    ShapeError,
)
from .fields import Field, Frame, Parity, TrainingSample, make_training_sample, split_fields, weave
from .model import ModelConfig, forward, init_weights, load_weights, parameter_count, save_weights

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DeinterlaceError",
    "Field",
    "FormatError",
    "Frame",
    "ModelConfig",
    "NumericalError",
    "Parity",
    "ParityError",
    "ShapeError",
    "TrainingSample",
    "__version__",
    "forward",
    "init_weights",
    "load_weights",
    "make_training_sample",
    "parameter_count",
    "save_weights",
    "split_fields",
    "weave",
]
