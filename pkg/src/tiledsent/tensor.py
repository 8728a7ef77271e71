"""Minimal reverse-mode automatic differentiation on float64 NumPy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient buffer. Every
operation records its parents and a backward closure; ``Tensor.backward``
topologically sorts the recorded graph and runs the closures once each,
in reverse order. Only the operations the sentiment models need are
implemented; there is no broadcasting beyond scalars.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

__all__ = ["Tensor", "stack"]


def _as_array(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    """Dense float64 array with an optional gradient and graph record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name",
                 "pool_indices")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def param(data, name=None) -> "Tensor":
        return Tensor(data, requires_grad=True, name=name)

    @staticmethod
    def const(data, name=None) -> "Tensor":
        return Tensor(data, requires_grad=False, name=name)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    # -- gradient plumbing ---------------------------------------------------

    def accumulate_grad(self, value):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += value

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate ``grad`` on every reachable tensor with requires_grad.

        The loss must be a scalar. Each graph node's closure runs exactly
        once, in reverse topological order.
        """
        if self.data.size != 1:
            raise InvalidInputError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------------

    def _binary(self, other, out_data, back):
        parents = [self]
        if isinstance(other, Tensor):
            parents.append(other)
        req = any(p.requires_grad for p in parents)
        return Tensor(out_data, requires_grad=req, parents=parents, backward=back)

    def __add__(self, other):
        if isinstance(other, Tensor):
            if self.data.shape != other.data.shape:
                raise InvalidInputError(
                    f"add shape mismatch: {self.data.shape} vs {other.data.shape}"
                )

            def back(g):
                if self.requires_grad:
                    self.accumulate_grad(g)
                if other.requires_grad:
                    other.accumulate_grad(g)

            return self._binary(other, self.data + other.data, back)

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(g)

        return self._binary(other, self.data + float(other), back)

    __radd__ = __add__

    def __neg__(self):
        def back(g):
            if self.requires_grad:
                self.accumulate_grad(-g)

        return Tensor(-self.data, self.requires_grad, (self,), back)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return self + (-other)
        return self + (-float(other))

    def __rsub__(self, other):
        return (-self) + float(other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if self.data.shape != other.data.shape:
                raise InvalidInputError(
                    f"mul shape mismatch: {self.data.shape} vs {other.data.shape}"
                )

            def back(g):
                if self.requires_grad:
                    self.accumulate_grad(g * other.data)
                if other.requires_grad:
                    other.accumulate_grad(g * self.data)

            return self._binary(other, self.data * other.data, back)

        c = float(other)

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(g * c)

        return self._binary(other, self.data * c, back)

    __rmul__ = __mul__

    def matvec(self, x: "Tensor") -> "Tensor":
        """(B, A) @ (A,) -> (B,)."""
        if self.data.ndim != 2 or x.data.ndim != 1 or self.data.shape[1] != x.data.shape[0]:
            raise InvalidInputError(
                f"matvec shape mismatch: {self.data.shape} @ {x.data.shape}"
            )

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(np.outer(g, x.data))
            if x.requires_grad:
                x.accumulate_grad(self.data.T @ g)

        req = self.requires_grad or x.requires_grad
        return Tensor(self.data @ x.data, req, (self, x), back)

    # -- reductions and selection ---------------------------------------------

    def sum(self) -> "Tensor":
        def back(g):
            if self.requires_grad:
                self.accumulate_grad(np.full_like(self.data, float(g)))

        return Tensor(self.data.sum(), self.requires_grad, (self,), back)

    def pick(self, index: int) -> "Tensor":
        """Select one entry of a vector as a scalar."""
        if self.data.ndim != 1:
            raise InvalidInputError("pick expects a vector")
        if not 0 <= index < self.data.shape[0]:
            raise InvalidInputError(
                f"index {index} out of range for length {self.data.shape[0]}"
            )

        def back(g):
            if self.requires_grad:
                buf = np.zeros_like(self.data)
                buf[index] = float(g)
                self.accumulate_grad(buf)

        return Tensor(self.data[index], self.requires_grad, (self,), back)

    def max(self, axis: int) -> "Tensor":
        """Max along one axis; ties route the gradient to the lowest index."""
        idx = np.argmax(self.data, axis=axis)
        out_data = np.max(self.data, axis=axis)

        def back(g):
            if self.requires_grad:
                buf = np.zeros_like(self.data)
                if self.data.ndim == 1:
                    buf[idx] = float(g)
                elif axis in (1, -1):
                    buf[np.arange(self.data.shape[0]), idx] = g
                else:
                    buf[idx, np.arange(self.data.shape[1])] = g
                self.accumulate_grad(buf)

        out = Tensor(out_data, self.requires_grad, (self,), back)
        out.name = "max"
        return out

    def clamp(self, lo: float, hi: float) -> "Tensor":
        """Clip values to [lo, hi]; gradient passes only where unclipped."""
        inside = (self.data >= lo) & (self.data <= hi)

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(np.asarray(g) * inside)

        return Tensor(np.clip(self.data, lo, hi), self.requires_grad, (self,), back)

    # -- pointwise nonlinearities ----------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(g * mask)

        return Tensor(self.data * mask, self.requires_grad, (self,), back)

    def tanh(self) -> "Tensor":
        t = np.tanh(self.data)

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(g * (1.0 - t * t))

        return Tensor(t, self.requires_grad, (self,), back)

    def sigmoid(self) -> "Tensor":
        s = 1.0 / (1.0 + np.exp(-self.data))

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(g * s * (1.0 - s))

        return Tensor(s, self.requires_grad, (self,), back)

    def exp(self) -> "Tensor":
        e = np.exp(self.data)

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(g * e)

        return Tensor(e, self.requires_grad, (self,), back)

    def log(self) -> "Tensor":
        def back(g):
            if self.requires_grad:
                self.accumulate_grad(g / self.data)

        return Tensor(np.log(self.data), self.requires_grad, (self,), back)

    def softmax(self) -> "Tensor":
        """Stable softmax over a vector; sums to 1 within 1e-9."""
        if self.data.ndim != 1:
            raise InvalidInputError("softmax expects a vector")
        z = self.data - self.data.max()
        e = np.exp(z)
        s = e / e.sum()

        def back(g):
            if self.requires_grad:
                self.accumulate_grad(s * (g - np.dot(g, s)))

        return Tensor(s, self.requires_grad, (self,), back)


def stack(tensors) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    tensors = list(tensors)
    if not tensors:
        raise InvalidInputError("stack of no tensors")
    shape = tensors[0].data.shape
    for t in tensors:
        if t.data.shape != shape:
            raise InvalidInputError("stack shape mismatch")
    data = np.stack([t.data for t in tensors], axis=0)

    def back(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate_grad(g[i])

    req = any(t.requires_grad for t in tensors)
    return Tensor(data, req, tuple(tensors), back)
