"""Adam optimizers: a dense variant and a lazy row-wise variant.

The row-wise variant keeps per-row moment estimates and per-row step counters
so that rows updated rarely (tail labels that enter few shortlists) still get
correct bias correction, and rows never touched are never modified at all.
"""

from __future__ import annotations

import numpy as np


class DenseAdam:
    """Standard Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class RowAdam:
    """Adam over the rows of one (R, ...) array, touching only given rows.

    Rows outside `rows` keep their parameters, moments, and step counts
    untouched, which is what makes the sparse-update contract hold.
    """

    def __init__(self, param: np.ndarray, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.param = param
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros_like(param)
        self.v = np.zeros_like(param)
        self.t = np.zeros(param.shape[0], dtype=np.int64)

    def step(self, rows: np.ndarray, grad_rows: np.ndarray) -> None:
        """Apply one Adam step to param[rows] with gradients grad_rows."""
        if len(rows) == 0:
            return
        b1, b2 = self.beta1, self.beta2
        self.t[rows] += 1
        t = self.t[rows]
        if self.param.ndim > 1:
            t = t.reshape((-1,) + (1,) * (self.param.ndim - 1))
        m = self.m[rows]
        v = self.v[rows]
        m = b1 * m + (1.0 - b1) * grad_rows
        v = b2 * v + (1.0 - b2) * np.square(grad_rows)
        self.m[rows] = m
        self.v[rows] = v
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        self.param[rows] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
