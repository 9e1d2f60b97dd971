"""Adadelta parameter updates (Zeiler's accumulator form)."""

import numpy as np


def adadelta_step(param, grad, eg2, edx2, *, rho=0.95, eps=1e-6, lr=1.0):
    """One in-place update. eg2/edx2 are the running averages of squared
    gradients and squared updates; all four arrays share the param shape."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not (param.shape == grad.shape == eg2.shape == edx2.shape):
        raise ValueError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"eg2 {eg2.shape}, edx2 {edx2.shape}"
        )
    eg2[...] = rho * eg2 + (1 - rho) * grad * grad
    delta = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * grad
    edx2[...] = rho * edx2 + (1 - rho) * delta * delta
    param += lr * delta
    return param, eg2, edx2


class Adadelta:
    """Tracks one accumulator pair per parameter tensor."""

    def __init__(self, params, rho=0.95, eps=1e-6, lr=1.0):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        if isinstance(params, dict):
            items = list(params.items())
        else:
            items = [(str(i), p) for i, p in enumerate(params)]
        self.rho, self.eps, self.lr = rho, eps, lr
        self._slots = [
            (name, p, np.zeros_like(p.values), np.zeros_like(p.values)) for name, p in items
        ]

    def step(self):
        for _, p, eg2, edx2 in self._slots:
            grad = p.grad if p.grad is not None else np.zeros_like(p.values)
            adadelta_step(p.values, grad, eg2, edx2, rho=self.rho, eps=self.eps, lr=self.lr)

    def zero_grad(self):
        for _, p, _, _ in self._slots:
            p.zero_grad()
