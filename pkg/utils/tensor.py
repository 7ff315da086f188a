"""
Tensor & Reverse-Mode Differentiation
A numpy-backed tensor that records backward closures as operations run,
plus the elementwise/reduction ops the fingerprint pipeline differentiates through
"""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import DimensionError

DEFAULT_DTYPE = np.float32

Operand = Union["Tensor", np.ndarray, float, int]


def _as_array(value, dtype=None) -> np.ndarray:
    arr = np.asarray(value)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(DEFAULT_DTYPE)
    return arr


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    Dense tensor with optional gradient tracking

    Args:
        data: Array-like values (float32 unless a float64 array is passed)
        requires_grad: Accumulate gradients into `.grad` during backward
        name: Optional label used in error messages (parameters are named)
    """

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        backward_fn: Optional[Callable[[np.ndarray], None]] = None,
        op: str = "",
        name: Optional[str] = None,
    ):
        self.data = _as_array(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn
        self.op = op
        self.name = name

    # ------------------------------------------------------------------
    # Basics
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def _lift(self, other: Operand) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def _accumulate(self, grad: np.ndarray):
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            grad = np.broadcast_to(grad, self.data.shape)
        if self.grad is None:
            self.grad = np.array(grad, copy=True)
        else:
            self.grad = self.grad + grad

    @staticmethod
    def _result(data: np.ndarray, parents: Tuple["Tensor", ...], backward_fn, op: str) -> "Tensor":
        requires = any(p.requires_grad for p in parents)
        if not requires:
            return Tensor(data, op=op)
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)

    # ------------------------------------------------------------------
    # Backward pass
    # ------------------------------------------------------------------

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None):
        """
        Propagate gradients to every tensor that requires them

        Args:
            grad: Upstream gradient; defaults to 1 for scalar outputs
        """
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() without an explicit gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        self._accumulate(grad)
        for node in reversed(self._topological_order()):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # ------------------------------------------------------------------
    # Elementwise arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other: Operand) -> "Tensor":
        other = self._lift(other)
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._result(a.data + b.data, (a, b), backward, "add")

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self

        def backward(g):
            a._accumulate(-g)

        return Tensor._result(-a.data, (a,), backward, "neg")

    def __sub__(self, other: Operand) -> "Tensor":
        return self + (-self._lift(other))

    def __rsub__(self, other: Operand) -> "Tensor":
        return self._lift(other) + (-self)

    def __mul__(self, other: Operand) -> "Tensor":
        other = self._lift(other)
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g * b.data, a.shape))
            b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._result(a.data * b.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> "Tensor":
        other = self._lift(other)
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g / b.data, a.shape))
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._result(a.data / b.data, (a, b), backward, "div")

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return self._lift(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        a = self

        def backward(g):
            a._accumulate(g * exponent * np.power(a.data, exponent - 1))

        return Tensor._result(np.power(a.data, exponent), (a,), backward, "pow")

    def sqrt(self) -> "Tensor":
        a = self
        out = np.sqrt(a.data)

        def backward(g):
            a._accumulate(g / (2.0 * out))

        return Tensor._result(out, (a,), backward, "sqrt")

    def abs(self) -> "Tensor":
        a = self

        def backward(g):
            a._accumulate(g * np.sign(a.data))

        return Tensor._result(np.abs(a.data), (a,), backward, "abs")

    # ------------------------------------------------------------------
    # Activations
    # ------------------------------------------------------------------

    def tanh(self) -> "Tensor":
        a = self
        out = np.tanh(a.data)

        def backward(g):
            a._accumulate(g * (1.0 - out * out))

        return Tensor._result(out, (a,), backward, "tanh")

    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0

        def backward(g):
            a._accumulate(g * mask)

        return Tensor._result(a.data * mask, (a,), backward, "relu")

    def leaky_relu(self, slope: float) -> "Tensor":
        a = self
        scale = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)

        def backward(g):
            a._accumulate(g * scale)

        return Tensor._result(a.data * scale, (a,), backward, "leaky_relu")

    # ------------------------------------------------------------------
    # Reductions and shape ops
    # ------------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))

        return Tensor._result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        original = a.shape

        def backward(g):
            a._accumulate(g.reshape(original))

        return Tensor._result(a.data.reshape(shape), (a,), backward, "reshape")

    def take(self, indices: np.ndarray) -> "Tensor":
        """Gather along the first axis"""
        a = self
        indices = np.asarray(indices, dtype=np.int64)

        def backward(g):
            full = np.zeros_like(a.data)
            np.add.at(full, indices, g)
            a._accumulate(full)

        return Tensor._result(np.take(a.data, indices, axis=0), (a,), backward, "take")

    def matmul(self, other: Operand) -> "Tensor":
        other = self._lift(other)
        a, b = self, other
        if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
            raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def backward(g):
            if a.ndim == 2 and b.ndim == 2:
                a._accumulate(g @ b.data.T)
                b._accumulate(a.data.T @ g)
            elif a.ndim == 2:
                a._accumulate(np.outer(g, b.data))
                b._accumulate(a.data.T @ g)
            elif b.ndim == 2:
                a._accumulate(b.data @ g)
                b._accumulate(np.outer(a.data, g))
            else:
                a._accumulate(g * b.data)
                b._accumulate(g * a.data)

        return Tensor._result(np.matmul(a.data, b.data), (a, b), backward, "matmul")

    __matmul__ = matmul


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along an existing axis"""
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(part)

    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat along axis {axis} failed for shapes {shapes}") from exc
    return Tensor._result(data, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis"""
    tensors = tuple(tensors)

    def backward(g):
        for i, t in enumerate(tensors):
            t._accumulate(g[i])

    return Tensor._result(np.stack([t.data for t in tensors]), tensors, backward, "stack")
