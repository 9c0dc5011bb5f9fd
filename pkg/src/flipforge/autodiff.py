"""Dense double-precision tensors with a reverse-mode tape, plus Adam.

Small by design: the networks built on top have a few hundred thousand
parameters at most, and all execution is deterministic single-threaded numpy.
Ops work with or without a tape; calling them on plain (untaped) tensors is
the fast path used during rollouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class Tape:
    """Ordered record of operations; creation order is the topological order."""

    def __init__(self):
        self.records = []  # (out_id, [(in_id, vjp), ...])
        self.next_id = 0

    def fresh_id(self):
        self.next_id += 1
        return self.next_id

    def record(self, out_id, pulls):
        self.records.append((out_id, pulls))


class Tensor:
    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape=None, node_id=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.node_id = node_id if node_id is not None else (tape.fresh_id() if tape else None)

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, taped={self.tape is not None})"


def constant(value):
    return Tensor(value)


def leaf(tape: Tape, value) -> Tensor:
    """A watched input; gradients accumulate at its node id."""
    return Tensor(value, tape=tape, node_id=tape.fresh_id())


def _tape_of(*tensors):
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ValueError("operands belong to different tapes")
            tape = t.tape
    return tape


def _emit(tape, out_data, pulls):
    if tape is None:
        return Tensor(out_data)
    out = Tensor(out_data, tape=tape)
    tape.record(out.node_id, pulls)
    return out


def _unbroadcast(grad, shape):
    """Sum gradient over axes that were broadcast in the forward op."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    out = a.data + b.data
    pulls = []
    if a.tape is not None:
        pulls.append((a.node_id, lambda g, s=a.data.shape: _unbroadcast(g, s)))
    if b.tape is not None:
        pulls.append((b.node_id, lambda g, s=b.data.shape: _unbroadcast(g, s)))
    return _emit(tape, out, pulls)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def neg(a: Tensor) -> Tensor:
    pulls = [(a.node_id, lambda g: -g)] if a.tape is not None else []
    return _emit(a.tape, -a.data, pulls)


def mul(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    out = a.data * b.data
    pulls = []
    if a.tape is not None:
        pulls.append((a.node_id, lambda g, d=b.data, s=a.data.shape: _unbroadcast(g * d, s)))
    if b.tape is not None:
        pulls.append((b.node_id, lambda g, d=a.data, s=b.data.shape: _unbroadcast(g * d, s)))
    return _emit(tape, out, pulls)


def scale(a: Tensor, factor: float) -> Tensor:
    pulls = [(a.node_id, lambda g: g * factor)] if a.tape is not None else []
    return _emit(a.tape, a.data * factor, pulls)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    out = a.data @ b.data
    pulls = []
    if a.tape is not None:
        pulls.append((a.node_id, lambda g, d=b.data: g @ d.T))
    if b.tape is not None:
        pulls.append((b.node_id, lambda g, d=a.data: d.T @ g))
    return _emit(tape, out, pulls)


@dataclass(frozen=True)
class SparseMatrix:
    """Constant COO matrix; never differentiated through its entries."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    shape: tuple

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        return cls(
            rows=np.asarray(rows, dtype=np.int64),
            cols=np.asarray(cols, dtype=np.int64),
            vals=np.asarray(vals, dtype=np.float64),
            shape=tuple(shape),
        )

    def dense(self):
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.vals)
        return out

    def apply(self, dense):
        out = np.zeros((self.shape[0],) + dense.shape[1:])
        np.add.at(out, self.rows, self.vals.reshape(-1, *([1] * (dense.ndim - 1))) * dense[self.cols])
        return out

    def apply_transpose(self, dense):
        out = np.zeros((self.shape[1],) + dense.shape[1:])
        np.add.at(out, self.cols, self.vals.reshape(-1, *([1] * (dense.ndim - 1))) * dense[self.rows])
        return out


def sparse_matmul(matrix: SparseMatrix, x: Tensor) -> Tensor:
    out = matrix.apply(x.data)
    pulls = []
    if x.tape is not None:
        pulls.append((x.node_id, lambda g, m=matrix: m.apply_transpose(g)))
    return _emit(x.tape, out, pulls)


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(a: Tensor) -> Tensor:
    sig = _stable_sigmoid(a.data)
    out = a.data * sig
    pulls = []
    if a.tape is not None:
        local = sig * (1.0 + a.data * (1.0 - sig))
        pulls.append((a.node_id, lambda g, d=local: g * d))
    return _emit(a.tape, out, pulls)


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.data)
    pulls = []
    if a.tape is not None:
        pulls.append((a.node_id, lambda g, d=out * (1.0 - out): g * d))
    return _emit(a.tape, out, pulls)


def log(a: Tensor) -> Tensor:
    pulls = []
    if a.tape is not None:
        pulls.append((a.node_id, lambda g, d=a.data: g / d))
    return _emit(a.tape, np.log(a.data), pulls)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    pulls = []
    if a.tape is not None:
        pulls.append((a.node_id, lambda g, d=out: g * d))
    return _emit(a.tape, out, pulls)


def square(a: Tensor) -> Tensor:
    pulls = []
    if a.tape is not None:
        pulls.append((a.node_id, lambda g, d=a.data: g * 2.0 * d))
    return _emit(a.tape, a.data * a.data, pulls)


def tensor_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    pulls = []
    if a.tape is not None:

        def pull(g, shape=a.data.shape, axis=axis, keepdims=keepdims):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        pulls.append((a.node_id, pull))
    return _emit(a.tape, out, pulls)


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return scale(tensor_sum(a), 1.0 / n)


def concat(tensors, axis=0) -> Tensor:
    tape = _tape_of(*tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    pulls = []
    offset = 0
    for t in tensors:
        size = t.data.shape[axis]
        if t.tape is not None:
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(offset, offset + size)
            pulls.append((t.node_id, lambda g, sl=tuple(sl): g[sl]))
        offset += size
    return _emit(tape, out, pulls)


def max_pool_rows(a: Tensor, row_indices) -> Tensor:
    """Per-column max over the given row subset; shape (1, columns).

    Gradient routes entirely to the first argmax row of each column.
    """
    rows = np.asarray(row_indices, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("empty pooling subset")
    block = a.data[rows]
    arg = rows[np.argmax(block, axis=0)]
    out = block.max(axis=0, keepdims=True)
    pulls = []
    if a.tape is not None:

        def pull(g, arg=arg, shape=a.data.shape):
            grad = np.zeros(shape)
            cols = np.arange(shape[1])
            np.add.at(grad, (arg, cols), g[0])
            return grad

        pulls.append((a.node_id, pull))
    return _emit(a.tape, out, pulls)


def softmax_masked(a: Tensor, mask_indices=None) -> Tensor:
    """Softmax over the given index subset of a column vector; zeros elsewhere."""
    flat = a.data.reshape(-1)
    if mask_indices is None:
        mask = np.arange(flat.size)
    else:
        mask = np.asarray(mask_indices, dtype=np.int64)
        if mask.size == 0:
            raise ValueError("empty softmax mask")
    z = flat[mask]
    z = z - z.max()
    e = np.exp(z)
    p = e / e.sum()
    out = np.zeros_like(flat)
    out[mask] = p
    out = out.reshape(a.data.shape)
    pulls = []
    if a.tape is not None:

        def pull(g, p=p, mask=mask, shape=a.data.shape):
            gflat = np.asarray(g).reshape(-1)
            gm = gflat[mask]
            local = p * (gm - (gm * p).sum())
            grad = np.zeros(shape).reshape(-1)
            grad[mask] = local
            return grad.reshape(shape)

        pulls.append((a.node_id, pull))
    return _emit(a.tape, out, pulls)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; the subgradient routes to ``a`` on ties."""
    tape = _tape_of(a, b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    pulls = []
    if a.tape is not None:
        pulls.append(
            (a.node_id, lambda g, m=take_a, s=a.data.shape: _unbroadcast(g * m, s))
        )
    if b.tape is not None:
        pulls.append(
            (b.node_id, lambda g, m=~take_a, s=b.data.shape: _unbroadcast(g * m, s))
        )
    return _emit(tape, out, pulls)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(a.data, lo, hi)
    pulls = []
    if a.tape is not None:
        gate = (a.data >= lo) & (a.data <= hi)
        pulls.append((a.node_id, lambda g, m=gate: g * m))
    return _emit(a.tape, out, pulls)


def backward(tape: Tape, loss: Tensor):
    """Reverse accumulation from a scalar loss; returns node id -> gradient."""
    if loss.tape is not tape:
        raise ValueError("loss does not belong to this tape")
    if loss.data.size != 1:
        raise ValueError("loss must be scalar")
    grads = {loss.node_id: np.ones_like(loss.data)}
    for out_id, pulls in reversed(tape.records):
        g = grads.pop(out_id, None)
        if g is None:
            continue
        for in_id, vjp in pulls:
            contrib = vjp(g)
            if in_id in grads:
                grads[in_id] = grads[in_id] + contrib
            else:
                grads[in_id] = contrib
    return grads


@dataclass
class Parameter:
    """Named value with Adam moment accumulators."""

    name: str
    value: np.ndarray
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    step: int = 0

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.m is None:
            self.m = np.zeros_like(self.value)
        if self.v is None:
            self.v = np.zeros_like(self.value)


def adam_step(params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update, in place, for params with entries in grads."""
    for p in params:
        g = grads.get(p.name)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.value.shape:
            raise ValueError(f"gradient shape mismatch for {p.name}")
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        mhat = p.m / (1.0 - beta1**p.step)
        vhat = p.v / (1.0 - beta2**p.step)
        p.value = p.value - lr * mhat / (np.sqrt(vhat) + eps)


def finite_diff_check(forward, values, tolerance=1e-4, step=1e-5, max_coords=40, rng=None):
    """Compare tape gradients against central differences on sampled coordinates.

    ``forward`` maps a dict name -> Tensor to a scalar Tensor; ``values`` is a
    dict name -> ndarray of base points.  Returns (max relative error, ok flag).
    """
    rng = rng if rng is not None else np.random.default_rng(0)

    def loss_at(vals):
        out = forward({k: Tensor(v) for k, v in vals.items()})
        return float(out.data.reshape(-1)[0])

    tape = Tape()
    taped = {k: leaf(tape, v) for k, v in values.items()}
    loss_tensor = forward(taped)
    grads_by_id = backward(tape, loss_tensor)
    grads = {k: grads_by_id.get(t.node_id, np.zeros_like(t.data)) for k, t in taped.items()}

    worst = 0.0
    for name, base in values.items():
        flat = np.asarray(base, dtype=np.float64).reshape(-1)
        count = min(max_coords, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for idx in coords:
            bumped = {k: np.array(v, dtype=np.float64, copy=True) for k, v in values.items()}
            bumped[name].reshape(-1)[idx] += step
            up = loss_at(bumped)
            bumped[name].reshape(-1)[idx] -= 2 * step
            down = loss_at(bumped)
            fd = (up - down) / (2 * step)
            an = float(np.asarray(grads[name]).reshape(-1)[idx])
            denom = max(abs(fd), abs(an), 1.0)
            worst = max(worst, abs(fd - an) / denom)
    return worst, worst < tolerance
