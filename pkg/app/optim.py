from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.exceptions import ValidationError
from app.model import Gradients, ModelParams

DEFAULT_RHO = 0.95
DEFAULT_EPS = 1e-6


@dataclass
class OptState:
    """Adadelta running averages of squared gradients and squared updates."""
    sq_grad: ModelParams
    sq_update: ModelParams
    rho: float = DEFAULT_RHO
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValidationError(f"rho must be in (0, 1): {self.rho}")
        if self.eps <= 0.0:
            raise ValidationError(f"eps must be positive: {self.eps}")


def new_opt_state(params: ModelParams, rho: float = DEFAULT_RHO, eps: float = DEFAULT_EPS) -> OptState:
    return OptState(params.zeros_like(), params.zeros_like(), rho, eps)


def adadelta_step(params: ModelParams, grads: Gradients, state: OptState) -> Tuple[ModelParams, OptState]:
    """Applies one Adadelta update in place and returns both arguments.

        E[g^2]  <- rho E[g^2] + (1 - rho) g^2
        dx       = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
        x       <- x + dx
    """
    rho, eps = state.rho, state.eps
    for name, value in params.tensors.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ValidationError(f"Gradient for {name} has shape {grad.shape}, expected {value.shape}")
        sq_grad = state.sq_grad.tensors[name]
        sq_update = state.sq_update.tensors[name]
        sq_grad *= rho
        sq_grad += (1.0 - rho) * grad * grad
        update = -np.sqrt(sq_update + eps) / np.sqrt(sq_grad + eps) * grad
        sq_update *= rho
        sq_update += (1.0 - rho) * update * update
        value += update
    return params, state
