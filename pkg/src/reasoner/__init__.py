"""Question answering over short fact lists, with a trainable reasoning stack."""

from .answerer import AnswerSpace
from .autodiff import Tape, Tensor, backward, grad_check
from .data import Instance, TaskSpec, generate, parse_babi, serialize
from .encoder import Vocabulary
from .model import ReasonerClassifier
from .reasoning import ReasonerConfig
from .training import TrainConfig

__all__ = [
    "AnswerSpace",
    "Instance",
    "ReasonerClassifier",
    "ReasonerConfig",
    "Tape",
    "TaskSpec",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "backward",
    "generate",
    "grad_check",
    "parse_babi",
    "serialize",
]
