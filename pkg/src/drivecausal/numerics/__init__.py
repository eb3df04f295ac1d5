from . import ops
from .gradcheck import GradCheckReport, NonDeterministicError, grad_check, numeric_grad
from .nn import LayerNorm, Linear, Module, Parameter, glorot
from .optim import SGD, OptState, optimizer_step
from .ops import softmax
from .tensor import NonFiniteError, ShapeError, Tensor, no_grad

__all__ = [
    "ops", "Tensor", "Parameter", "Module", "Linear", "LayerNorm", "glorot",
    "SGD", "OptState", "optimizer_step", "softmax", "grad_check", "numeric_grad",
    "GradCheckReport", "NonDeterministicError", "ShapeError", "NonFiniteError", "no_grad",
]
