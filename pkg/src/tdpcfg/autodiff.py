"""Reverse-mode automatic differentiation over dense numpy arrays.

The operator set is closed: exactly what the grammar parameterization
networks and the inside recursion need.  There is no general
broadcasting; the accepted shape patterns are matrix-matrix,
matrix-vector, row-bias addition and rowwise reductions.  Every backward
rule is hand-written, which keeps the tape auditable and makes the
finite-difference oracle meaningful.

A Tape is a plain ordered list of primitive applications.  Operands are
always recorded before their consumers, so one reverse sweep propagates
cotangents correctly.  Tapes are single-threaded; run one tape per
worker and merge leaf gradients outside.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ShapeError

_FLOAT_TYPES = (np.float32, np.float64)


class Array:
    """A dense real array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in _FLOAT_TYPES:
            arr = arr.astype(np.float64)
        if any(s < 1 for s in arr.shape):
            raise ShapeError(f"zero-extent array of shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Array(shape={self.shape}, requires_grad={self.requires_grad})"


class _Record:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of primitive applications (a Wengert list)."""

    def __init__(self):
        self.records: list[_Record] = []
        self._produced: set[int] = set()
        self._leaf_ids: set[int] = set()
        self.leaves: list[Array] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def _note_leaf(self, a: Array) -> None:
        if a.requires_grad and id(a) not in self._produced and id(a) not in self._leaf_ids:
            self._leaf_ids.add(id(a))
            self.leaves.append(a)

    def record(self, inputs: tuple[Array, ...], output: Array, backward) -> None:
        for a in inputs:
            self._note_leaf(a)
        self._produced.add(id(output))
        self.records.append(_Record(inputs, output, backward))


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _emit(inputs: tuple[Array, ...], out_data: np.ndarray, backward) -> Array:
    requires = any(a.requires_grad for a in inputs)
    out = Array(out_data, requires_grad=requires)
    tape = _active_tape()
    if tape is not None and requires:
        tape.record(inputs, out, backward)
    return out


def constant(data, dtype=None) -> Array:
    return Array(data, requires_grad=False, dtype=dtype)


def parameter(data, dtype=None) -> Array:
    return Array(np.array(data, dtype=dtype, copy=True), requires_grad=True)


def _check_same_shape(a: Array, b: Array, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Array, b: Array) -> Array:
    """Matrix/vector product for ndim <= 2 operands (no batching)."""
    if a.ndim > 2 or b.ndim > 2 or a.ndim == 0 or b.ndim == 0:
        raise ShapeError(f"matmul expects 1-D/2-D operands, got {a.shape} @ {b.shape}")
    inner_a = a.shape[-1]
    inner_b = b.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        a2 = a.data.reshape(1, -1) if a.ndim == 1 else a.data
        b2 = b.data.reshape(-1, 1) if b.ndim == 1 else b.data
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        ga = (g2 @ b2.T).reshape(a.shape)
        gb = (a2.T @ g2).reshape(b.shape)
        return ga, gb

    return _emit((a, b), out, backward)


def hadamard(a: Array, b: Array) -> Array:
    _check_same_shape(a, b, "hadamard")
    out = a.data * b.data

    def backward(g):
        return g * b.data, g * a.data

    return _emit((a, b), out, backward)


def add(a: Array, b: Array) -> Array:
    """Elementwise sum; also accepts (N, K) + (K,) for bias rows."""
    if a.shape == b.shape:
        bias = False
    elif a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        bias = True
    else:
        raise ShapeError(f"add: incompatible shapes {a.shape} + {b.shape}")
    out = a.data + b.data

    def backward(g):
        return g, (g.sum(axis=0) if bias else g)

    return _emit((a, b), out, backward)


def scale(a: Array, factor) -> Array:
    """Multiply by a python float or a scalar Array (the gate primitive)."""
    if isinstance(factor, Array):
        if factor.shape != ():
            raise ShapeError("scale factor must be a scalar")
        out = a.data * factor.data

        def backward(g):
            return g * factor.data, np.asarray((g * a.data).sum(), dtype=factor.dtype)

        return _emit((a, factor), out, backward)

    f = float(factor)

    def backward_const(g):
        return (g * f,)

    return _emit((a,), a.data * f, backward_const)


def relu(a: Array) -> Array:
    mask = a.data > 0  # subgradient 0 at exactly 0

    def backward(g):
        return (g * mask,)

    return _emit((a,), np.where(mask, a.data, 0.0), backward)


def log(a: Array) -> Array:
    out = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return _emit((a,), out, backward)


def exp(a: Array) -> Array:
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _emit((a,), out, backward)


def softmax_over_axis(a: Array, axis: int) -> Array:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _emit((a,), out, backward)


def logsumexp_over_axis(a: Array, axis: int) -> Array:
    if a.shape[axis] == 0:
        raise ShapeError("logsumexp over an empty axis")
    mx = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - mx)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(mx + np.log(s), axis=axis)

    def backward(g):
        soft = e / s
        return (np.expand_dims(g, axis) * soft,)

    return _emit((a,), out, backward)


def gather_rows(a: Array, indices) -> Array:
    """Select rows (axis 0) of a 1-D or 2-D array; indices are constants."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather_rows expects a flat index list")
    if a.ndim not in (1, 2):
        raise ShapeError("gather_rows expects a 1-D or 2-D operand")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError("gather_rows index out of range")
    out = a.data[idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _emit((a,), out, backward)


def sum_over_axis(a: Array, axis: int | None = None) -> Array:
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)
        return (np.repeat(np.expand_dims(g, axis), a.shape[axis], axis=axis),)

    return _emit((a,), out, backward)


def transpose(a: Array) -> Array:
    if a.ndim != 2:
        raise ShapeError("transpose expects a matrix")

    def backward(g):
        return (g.T,)

    return _emit((a,), a.data.T, backward)


def reshape(a: Array, shape) -> Array:
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return _emit((a,), out, backward)


# ---------------------------------------------------------------------------
# reverse sweep


def backward(tape: Tape, output: Array) -> dict[Array, np.ndarray]:
    """Propagate d(output)/d(leaf) for every requires_grad leaf on the tape.

    The scalar output must have been produced on this tape.  Gradients
    are accumulated into each leaf's .grad buffer (allocated on demand)
    and also returned keyed by leaf identity.  Leaves the output does not
    depend on receive zeros.
    """
    if output.shape != ():
        raise ShapeError("backward needs a scalar output")
    cotangent: dict[int, np.ndarray] = {id(output): np.ones((), dtype=output.dtype)}
    for rec in reversed(tape.records):
        g = cotangent.pop(id(rec.output), None)
        if g is None:
            continue
        grads_in = rec.backward(g)
        for operand, gin in zip(rec.inputs, grads_in):
            if gin is None or not operand.requires_grad:
                continue
            slot = cotangent.get(id(operand))
            if slot is None:
                cotangent[id(operand)] = np.array(gin, dtype=operand.dtype, copy=True)
            else:
                slot += gin
    result: dict[Array, np.ndarray] = {}
    for leaf in tape.leaves:
        g = cotangent.get(id(leaf))
        if g is None:
            g = np.zeros_like(leaf.data)
        else:
            g = g.astype(leaf.dtype, copy=False)
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        leaf.grad += g
        result[leaf] = g
    return result


# ---------------------------------------------------------------------------
# finite-difference oracle


def finite_difference_check(
    fn: Callable[[list[Array]], Array],
    leaves: list[Array],
    eps: float = 1e-5,
    exclude: Iterable[np.ndarray] | None = None,
) -> float:
    """Compare tape gradients of a scalar function against central differences.

    fn receives the leaf Arrays and must build its value with the
    primitives above.  Returns the worst relative error over all checked
    coordinates, with denominator max(|analytic|, |numeric|, 1e-8).
    Coordinates flagged in `exclude` (one boolean mask per leaf) are
    skipped, e.g. relu inputs sitting exactly at the kink.
    """
    with Tape() as tape:
        out = fn(leaves)
    grads = backward(tape, out)
    masks = list(exclude) if exclude is not None else [None] * len(leaves)

    worst = 0.0
    for leaf, mask in zip(leaves, masks):
        analytic = grads[leaf]
        flat = leaf.data.reshape(-1)
        for pos in range(flat.size):
            if mask is not None and mask.reshape(-1)[pos]:
                continue
            orig = flat[pos]
            flat[pos] = orig + eps
            f_plus = fn(leaves).item()
            flat[pos] = orig - eps
            f_minus = fn(leaves).item()
            flat[pos] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic.reshape(-1)[pos]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
