"""Reverse-mode autodiff over dense float64 tensors.

A Tensor wraps a NumPy buffer plus an optional gradient. Ops (see ops.py)
build a DAG by recording parents and a backward closure on each produced
tensor; backward() runs the closures in reverse topological order.
"""

from contextlib import contextmanager

import numpy as np

_GUIDED = False


def guided_enabled():
    return _GUIDED


@contextmanager
def guided_mode():
    """Enable the guided ReLU backward rule (zero out negative upstream
    gradients) for the duration of the block. Attention-map use only; the
    flag is read at backward time, never during training."""
    global _GUIDED
    prev = _GUIDED
    _GUIDED = True
    try:
        yield
    finally:
        _GUIDED = prev


class Tensor:
    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, parents=(), backward=None):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.values.shape

    def accumulate_grad(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def node(values, parents, backward):
    """Graph-internal tensor: requires grad iff any parent does."""
    needs = any(p.requires_grad for p in parents)
    return Tensor(values, requires_grad=needs, parents=parents, backward=backward if needs else None)


def backward(output, seed=1.0):
    """Reverse topological sweep from `output`, accumulating gradients.

    seed is the gradient of the objective w.r.t. `output` (scalar broadcast
    or an array of matching shape; defaults to 1).
    """
    topo = []
    visited = set()
    stack = [(output, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            topo.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        for p in tensor._parents:
            if id(p) not in visited:
                stack.append((p, False))

    if output.grad is None:
        output.grad = np.zeros_like(output.values)
    output.grad += np.broadcast_to(np.asarray(seed, dtype=np.float64), output.values.shape)

    for tensor in reversed(topo):
        if tensor._backward is not None and tensor.grad is not None:
            tensor._backward()
