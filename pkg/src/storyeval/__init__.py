"""Desk-scale story evaluation: preference ranking, aspect ratings, comments.

The package trains a compact windowed-attention encoder-decoder on pairs
of stories written for the same prompt, where community upvotes say which
of the two is better.  One model jointly learns to

* score stories so the better one of a pair gets the higher score,
* predict which curated writing aspects a comment talks about,
* regress per-aspect ratings, and
* generate a short aspect-conditioned comment.

Everything runs on plain numpy with a small reverse-mode autodiff core,
sized so experiments finish on a laptop CPU.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractViolation,
    DataError,
    EmptyTextError,
    NumericFailure,
    StoryEvalError,
    UndefinedCorrelationError,
)
from .model import Model, ModelConfig
from .training import TrainConfig, TrainData, Trainer

__all__ = [
    "ConfigError",
    "ContractViolation",
    "DataError",
    "EmptyTextError",
    "Model",
    "ModelConfig",
    "NumericFailure",
    "StoryEvalError",
    "TrainConfig",
    "TrainData",
    "Trainer",
    "UndefinedCorrelationError",
    "__version__",
]
