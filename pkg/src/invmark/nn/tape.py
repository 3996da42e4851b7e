"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Desk scale only (graphs of a few hundred nodes, hidden dims up to ~64), so
a straightforward tape with full-precision dense math is the right tool.
Every op validates that its output is finite.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteValueError, ShapeMismatchError

_SIGMOID_CLIP = 60.0


class Tensor:
    """A value in the computation graph, with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteValueError("tensor holds non-finite values")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + grad

    def backward(self):
        if self.data.ndim != 0:
            raise ShapeMismatchError("backward() expects a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar used by layers and losses.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad, b.data.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data - b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-grad, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(grad):
        if a.requires_grad:
            a._accumulate(_unbroadcast(grad * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(grad * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def scale(a, factor: float) -> Tensor:
    a = _wrap(a)
    data = a.data * factor

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad * factor)

    return _make(data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeMismatchError(f"matmul {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(grad):
        if a.requires_grad:
            if b.data.ndim == 1:
                a._accumulate(np.outer(grad, b.data) if a.data.ndim == 2 else grad * b.data)
            else:
                a._accumulate(grad @ b.data.T)
        if b.requires_grad:
            if a.data.ndim == 1:
                b._accumulate(np.outer(a.data, grad) if b.data.ndim == 2 else grad * a.data)
            else:
                b._accumulate(a.data.T @ grad)

    return _make(data, (a, b), backward)


def relu(a) -> Tensor:
    a = _wrap(a)
    data = np.maximum(a.data, 0.0)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad * (a.data > 0.0))

    return _make(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    z = np.clip(a.data, -_SIGMOID_CLIP, _SIGMOID_CLIP)
    data = 1.0 / (1.0 + np.exp(-z))

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad * data * (1.0 - data))

    return _make(data, (a,), backward)


def mean_all(a) -> Tensor:
    a = _wrap(a)
    data = np.asarray(a.data.mean())

    def backward(grad):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, grad / a.data.size))

    return _make(data, (a,), backward)


def sum_all(a) -> Tensor:
    a = _wrap(a)
    data = np.asarray(a.data.sum())

    def backward(grad):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, grad))

    return _make(data, (a,), backward)


def mean_rows(a) -> Tensor:
    """Column means of an (n, d) tensor; the permutation-invariant readout."""
    a = _wrap(a)
    if a.data.ndim != 2:
        raise ShapeMismatchError("mean_rows expects a 2-D tensor")
    n = a.data.shape[0]
    data = a.data.mean(axis=0)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(grad / n, a.data.shape).copy())

    return _make(data, (a,), backward)


def log_softmax(a) -> Tensor:
    """Row-wise log-softmax for 1-D or 2-D tensors (last axis)."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = shifted - log_z
    soft = np.exp(data)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(grad - soft * grad.sum(axis=-1, keepdims=True))

    return _make(data, (a,), backward)


def select_classes(a, labels: np.ndarray) -> Tensor:
    """Pick entry labels[i] from row i of a 2-D tensor."""
    a = _wrap(a)
    idx = np.asarray(labels, dtype=int)
    rows = np.arange(a.data.shape[0])
    data = a.data[rows, idx]

    def backward(grad):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[rows, idx] = grad
            a._accumulate(full)

    return _make(data, (a,), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under row logits."""
    ls = log_softmax(logits)
    return scale(mean_all(select_classes(ls, labels)), -1.0)


def kl_to_teacher(student_logits: Tensor, teacher_probs: np.ndarray, temperature: float) -> Tensor:
    """Temperature-scaled KL(teacher || student), averaged over rows.

    ``teacher_probs`` are softened teacher probabilities (constant); the
    usual T^2 factor keeps gradient magnitudes comparable across T.
    """
    ls = log_softmax(scale(student_logits, 1.0 / temperature))
    p = np.asarray(teacher_probs, dtype=float)
    cross = scale(mean_all(sum_rows(mul(ls, Tensor(p)))), -1.0)
    entropy = float(-(p * np.log(np.maximum(p, 1e-300))).sum(axis=-1).mean())
    return scale(add(cross, Tensor(-entropy)), temperature**2)


def sum_rows(a) -> Tensor:
    """Row sums of a 2-D tensor."""
    a = _wrap(a)
    if a.data.ndim != 2:
        raise ShapeMismatchError("sum_rows expects a 2-D tensor")
    data = a.data.sum(axis=1)

    def backward(grad):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(grad[:, None], a.data.shape).copy())

    return _make(data, (a,), backward)


def stack_rows(tensors: list[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a 2-D tensor."""
    tensors = [_wrap(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=0)

    def backward(grad):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(grad[i])

    return _make(data, tuple(tensors), backward)
