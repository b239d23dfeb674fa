"""Optimizers over named parameter tensors.

Parameters are passed as a dict of name -> Tensor and updated in place;
gradients travel in a parallel dict of name -> array. AdamW keeps first/second
moment state per name and applies bias correction and decoupled weight decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


@dataclass
class AdamWState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_init(params: Dict[str, Tensor]) -> AdamWState:
    return AdamWState(step=0,
                      m={k: np.zeros_like(t.data) for k, t in params.items()},
                      v={k: np.zeros_like(t.data) for k, t in params.items()})


def _check(name: str, p: Tensor, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != p.data.shape:
        raise ShapeError(f"{name}: gradient shape {g.shape} != parameter "
                         f"shape {p.data.shape}")
    return g


def adamw_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray],
               state: AdamWState, lr: float, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.0) -> AdamWState:
    """One bias-corrected adaptive update with decoupled weight decay."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = _check(name, p, grads.get(name, np.zeros_like(p.data)))
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data = p.data - lr * update - lr * weight_decay * p.data
    return state


def sgd_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray],
             lr: float) -> None:
    """Plain gradient descent, no momentum."""
    for name, p in params.items():
        g = _check(name, p, grads.get(name, np.zeros_like(p.data)))
        p.data = p.data - lr * g


def collect_grads(params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    """Read accumulated .grad fields (missing ones count as zero)."""
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in params.items()}
