from . import ops
from .adadelta import Adadelta, adadelta_step
from .tensor import Tensor, backward, guided_enabled, guided_mode

__all__ = [
    "Adadelta",
    "Tensor",
    "adadelta_step",
    "backward",
    "guided_enabled",
    "guided_mode",
    "ops",
]
