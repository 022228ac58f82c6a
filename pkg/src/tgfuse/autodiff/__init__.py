from .tensor import Parameter, Tape, Tensor, backward, concat, matmul, no_grad, set_debug
from .functional import gelu, layer_norm, log, relu, sigmoid, softmax
from .optim import OptimizerState, adamw_step, clip_grad_norm, learning_rate

__all__ = [
    'Tensor', 'Parameter', 'Tape', 'backward', 'no_grad', 'set_debug', 'matmul', 'concat',
    'softmax', 'layer_norm', 'gelu', 'relu', 'sigmoid', 'log',
    'OptimizerState', 'adamw_step', 'clip_grad_norm', 'learning_rate',
]
