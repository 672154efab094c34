from .autodiff import Tensor, backward, grad, leaf
from .gradcheck import grad_check
from .optim import Adam
from .params import ParamTree, flatten, unflatten, watch
from .rng import Bernoulli, Normal, RngStream, Uniform, draw

__all__ = [
    "Adam", "Bernoulli", "Normal", "ParamTree", "RngStream", "Tensor", "Uniform",
    "backward", "draw", "flatten", "grad", "grad_check", "leaf", "unflatten", "watch",
]
