"""Adam optimizer over graph parameter Nodes."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, TrainingError
from .tensor import Node, Tensor


class Adam:
    """Standard Adam with bias correction.

    Parameters are updated by replacing each Node's (immutable) value
    tensor; moment buffers live here, keyed by position in the parameter
    list. ``step`` reads the accumulated gradients, so call it after
    ``backward`` and call ``zero_grad`` before the next forward pass.
    """

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params: list[Node] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros(p.value.shape) for p in self.params]
        self.v = [np.zeros(p.value.shape) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for i, p in enumerate(self.params):
            g = p._grad
            if g is None:
                continue
            if g.shape != p.value.shape:
                raise DimensionError(
                    f"grad shape {g.shape} != param shape {p.value.shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingError("NaN/Inf gradient in Adam step")
            m = self.m[i]
            v = self.v[i]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.value = Tensor._wrap(p.value.data - update)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
