"""Parameter update rules: plain SGD, SGD with momentum, L2 weight decay.

All functions are pure and operate on "parameter trees": ordered dicts
mapping tensor names to numpy arrays. The momentum update stores the
previous parameter change and applies

    update = -eta * grad + alpha * previous_update

so a first step (or alpha=0) reduces to plain SGD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch

ParamTree = dict[str, np.ndarray]


def _check_congruent(a: ParamTree, b: ParamTree, what: str) -> None:
    if a.keys() != b.keys():
        raise DimensionMismatch(f"{what}: key sets differ")
    for name in a:
        if a[name].shape != b[name].shape:
            raise DimensionMismatch(
                f"{what}: shape mismatch for '{name}': {a[name].shape} vs {b[name].shape}")


def zeros_like_tree(tree: ParamTree) -> ParamTree:
    return {name: np.zeros_like(arr) for name, arr in tree.items()}


@dataclass
class SgdmState:
    """Momentum state: the previous per-tensor parameter change."""

    delta_prev: ParamTree
    alpha: float = 0.9
    eta: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"momentum alpha must be in [0, 1), got {self.alpha}")
        if self.eta < 0.0:
            raise ConfigError(f"learning rate must be >= 0, got {self.eta}")

    @classmethod
    def init(cls, params: ParamTree, alpha: float = 0.9, eta: float = 0.1) -> "SgdmState":
        return cls(delta_prev=zeros_like_tree(params), alpha=alpha, eta=eta)


def sgd_step(theta: ParamTree, grad: ParamTree, eta: float) -> ParamTree:
    """theta' = theta - eta * grad, elementwise."""
    _check_congruent(theta, grad, "sgd_step")
    return {name: theta[name] - eta * grad[name] for name in theta}


def sgdm_step(theta: ParamTree, grad: ParamTree, state: SgdmState) -> tuple[ParamTree, SgdmState]:
    """Momentum step; returns the new parameters and the new state."""
    _check_congruent(theta, grad, "sgdm_step")
    _check_congruent(theta, state.delta_prev, "sgdm_step state")
    delta = {name: -state.eta * grad[name] + state.alpha * state.delta_prev[name]
             for name in theta}
    new_theta = {name: theta[name] + delta[name] for name in theta}
    return new_theta, SgdmState(delta_prev=delta, alpha=state.alpha, eta=state.eta)


def l2_term(weights: np.ndarray, mu: float) -> tuple[float, np.ndarray]:
    """L2 penalty mu * sum(w^2) and its gradient 2*mu*w for one tensor.

    The caller decides which tensors participate; biases never should.
    """
    if mu < 0.0:
        raise ConfigError(f"weight-decay coefficient must be >= 0, got {mu}")
    w = np.asarray(weights, dtype=np.float64)
    penalty = float(mu * np.sum(w * w))
    return penalty, 2.0 * mu * w


def l2_tree(weights: ParamTree, mu: float) -> tuple[float, ParamTree]:
    """Summed L2 penalty and per-tensor gradients over a tree of weights."""
    total = 0.0
    grads: ParamTree = {}
    for name, w in weights.items():
        pen, g = l2_term(w, mu)
        total += pen
        grads[name] = g
    return total, grads


@dataclass(frozen=True)
class RegConfig:
    """Weight-decay coefficient and overall regularization strength."""

    mu: float = 1e-4
    lambda_reg: float = 1.0

    def __post_init__(self):
        if self.mu < 0.0 or self.lambda_reg < 0.0:
            raise ConfigError("regularization coefficients must be non-negative")
