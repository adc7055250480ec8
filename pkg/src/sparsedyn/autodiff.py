"""Reverse-mode automatic differentiation on dense float64 arrays.

A ``Tape`` records primitive operations in the order they execute
(define-by-run).  Every operation appends one node; the backward pass walks
the node list once, in reverse, accumulating vector-Jacobian products.  The
primitive set is deliberately small: affine layers with sine activations plus
polynomial/trigonometric dictionary features only need
{add, sub, mul, matmul, sin, cos, integer power, square, sum, mean, scale}
and a few structural ops (column slicing, row gather, horizontal stack).

Everything is float64.  Tensors are immutable values: ops never write into
their inputs, so re-running forward+backward on the same data is bitwise
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for a primitive op."""


class Tensor:
    """A node in the computation graph, wrapping a float64 ndarray."""

    __slots__ = ("data", "tape", "node_id", "parents", "vjps", "track")

    def __init__(self, data, tape, parents=(), vjps=(), track=True):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.parents = parents
        self.vjps = vjps
        self.track = track
        tape._register(self)

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    # operator sugar; non-Tensor operands become constants on the same tape
    def __add__(self, other):
        return add(self, _as_tensor(other, self.tape))

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.tape))

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.tape))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other, self.tape))

    def __neg__(self):
        return scale(self, -1.0)


class Tape:
    """Ordered operation record.  Single-threaded; one per training step."""

    def __init__(self):
        self.nodes = []

    def _register(self, tensor):
        tensor.node_id = len(self.nodes)
        self.nodes.append(tensor)

    def leaf(self, data):
        """A differentiable input (parameter); backward reports its gradient."""
        return Tensor(data, self, track=True)

    def constant(self, data):
        """A non-differentiable input; backward never propagates into it."""
        return Tensor(data, self, track=False)

    def backward(self, output, seed=None):
        """Accumulate d(output)/d(leaf) for every tracked leaf on the tape.

        Returns a dict keyed by leaf Tensor.  Leaves that do not influence
        the output get a zero gradient of matching shape.
        """
        if output.tape is not self:
            raise ValueError("output tensor does not belong to this tape")
        if seed is None:
            seed = np.ones_like(output.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != output.data.shape:
                raise ShapeError(
                    f"seed shape {seed.shape} != output shape {output.data.shape}"
                )
        adjoints = [None] * len(self.nodes)
        adjoints[output.node_id] = seed
        for node in reversed(self.nodes[: output.node_id + 1]):
            g = adjoints[node.node_id]
            if g is None:
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                if vjp is None or not parent.track:
                    continue
                pg = vjp(g)
                if adjoints[parent.node_id] is None:
                    adjoints[parent.node_id] = pg
                else:
                    adjoints[parent.node_id] = adjoints[parent.node_id] + pg
        grads = {}
        for node in self.nodes:
            if node.track and not node.parents:
                g = adjoints[node.node_id]
                grads[node] = np.zeros_like(node.data) if g is None else g
        return grads


def _as_tensor(x, tape):
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise ValueError("operands live on different tapes")
        return x
    return tape.constant(x)


def _unbroadcast(grad, shape):
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _elementwise_compatible(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}")


def add(a, b):
    _elementwise_compatible(a, b, "add")
    return Tensor(
        a.data + b.data,
        a.tape,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(g, b.data.shape),
        ),
    )


def sub(a, b):
    _elementwise_compatible(a, b, "sub")
    return Tensor(
        a.data - b.data,
        a.tape,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(-g, b.data.shape),
        ),
    )


def mul(a, b):
    _elementwise_compatible(a, b, "mul")
    return Tensor(
        a.data * b.data,
        a.tape,
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    return Tensor(
        a.data @ b.data,
        a.tape,
        parents=(a, b),
        vjps=(lambda g: g @ b.data.T, lambda g: a.data.T @ g),
    )


def sin(a):
    return Tensor(
        np.sin(a.data), a.tape, parents=(a,), vjps=(lambda g: g * np.cos(a.data),)
    )


def cos(a):
    return Tensor(
        np.cos(a.data), a.tape, parents=(a,), vjps=(lambda g: -g * np.sin(a.data),)
    )


def power(a, k):
    """Integer power a**k, k >= 0."""
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise ValueError(f"power: exponent must be a non-negative int, got {k!r}")
    if k == 0:
        return Tensor(np.ones_like(a.data), a.tape, parents=(a,), vjps=(None,))
    out = a.data**k
    return Tensor(
        out,
        a.tape,
        parents=(a,),
        vjps=(lambda g: g * k * a.data ** (k - 1),),
    )


def square(a):
    return Tensor(
        a.data * a.data, a.tape, parents=(a,), vjps=(lambda g: 2.0 * g * a.data,)
    )


def scale(a, c):
    """Multiply by a python float (broadcast-scale)."""
    c = float(c)
    return Tensor(c * a.data, a.tape, parents=(a,), vjps=(lambda g: c * g,))


def tsum(a):
    return Tensor(
        a.data.sum(), a.tape, parents=(a,), vjps=(lambda g: np.full_like(a.data, g),)
    )


def tmean(a):
    n = a.data.size
    return Tensor(
        a.data.mean(),
        a.tape,
        parents=(a,),
        vjps=(lambda g: np.full_like(a.data, g / n),),
    )


def columns(a, start, stop):
    """Slice columns [start:stop] of a 2-d tensor."""
    if a.data.ndim != 2:
        raise ShapeError(f"columns: expected 2-d tensor, got shape {a.data.shape}")

    def vjp(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return full

    return Tensor(a.data[:, start:stop], a.tape, parents=(a,), vjps=(vjp,))


def gather_rows(a, idx):
    """Select rows a[idx]; gradient scatter-adds back."""
    idx = np.asarray(idx)

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return full

    return Tensor(a.data[idx], a.tape, parents=(a,), vjps=(vjp,))


def hstack(tensors):
    """Concatenate 2-d tensors along columns."""
    tape = tensors[0].tape
    widths = [t.data.shape[1] for t in tensors]
    offsets = np.cumsum([0] + widths)
    vjps = []
    for i in range(len(tensors)):
        lo, hi = offsets[i], offsets[i + 1]
        vjps.append(lambda g, lo=lo, hi=hi: g[:, lo:hi])
    return Tensor(
        np.concatenate([t.data for t in tensors], axis=1),
        tape,
        parents=tuple(tensors),
        vjps=tuple(vjps),
    )


def sum_squared_rows_mean(a):
    """mean over rows of the squared 2-norm of each row: sum(a**2) / nrows."""
    n_rows = a.data.shape[0]
    return scale(tsum(square(a)), 1.0 / n_rows)


@dataclass(frozen=True)
class DualValue:
    """Forward-mode scalar: value and directional derivative w.r.t. time.

    The tangent of a constant is exactly 0 (see ``DualValue.const``).
    """

    primal: float
    tangent: float

    @staticmethod
    def const(value):
        return DualValue(float(value), 0.0)

    @staticmethod
    def variable(value, tangent=1.0):
        return DualValue(float(value), float(tangent))

    def __add__(self, other):
        other = _as_dual(other)
        return DualValue(self.primal + other.primal, self.tangent + other.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_dual(other)
        return DualValue(self.primal - other.primal, self.tangent - other.tangent)

    def __mul__(self, other):
        other = _as_dual(other)
        return DualValue(
            self.primal * other.primal,
            self.tangent * other.primal + self.primal * other.tangent,
        )

    __rmul__ = __mul__

    def sin(self):
        return DualValue(np.sin(self.primal), np.cos(self.primal) * self.tangent)

    def cos(self):
        return DualValue(np.cos(self.primal), -np.sin(self.primal) * self.tangent)

    def power(self, k):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("power: exponent must be a non-negative int")
        if k == 0:
            return DualValue(1.0, 0.0)
        return DualValue(
            self.primal**k, k * self.primal ** (k - 1) * self.tangent
        )


def _as_dual(x):
    return x if isinstance(x, DualValue) else DualValue.const(x)
