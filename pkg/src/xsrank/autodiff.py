"""Reverse-mode automatic differentiation over dense float64 arrays.

A `Tape` records every operation in forward execution order; because creation
order is already a topological order, the backward sweep is a single reversed
pass over the node list.  Tensors are immutable once created.  One tape per
training sample; nothing here is shared across threads.

Only the operations needed by the ranking model are provided: matrix product,
elementwise arithmetic, row-bias broadcast, transpose, relu/tanh/softplus,
row softmax, valid-mode 1-D convolution, and scalar reductions.  There is no
general broadcasting; reshape explicitly if shapes do not line up.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class NonFiniteError(FloatingPointError):
    """A forward operation produced NaN or Inf, which is an error state."""


class Tape:
    """Ordered record of operations for one forward pass."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[Tensor] = []

    def release(self) -> None:
        """Drop the recorded graph so it frees by reference counting alone.

        The tape and its tensors form reference cycles (tape -> tensor ->
        tape, plus backward closures holding parents), so without this an
        abandoned tape waits for the cycle collector while holding every
        intermediate array of the forward pass.  Call it once gradients
        have been read; training does so after each sample.  The tape is
        empty afterwards and may record a fresh forward pass.
        """
        for t in self.nodes:
            t._backward = None
            t.grad = None
        self.nodes.clear()

    def leaf(self, data, name: str | None = None) -> "Tensor":
        """Register an input tensor that should receive a gradient."""
        return Tensor(data, tape=self, name=name)

    def backward(self, loss: "Tensor") -> None:
        """Accumulate gradients of `loss` into every tensor on this tape.

        Tensors not on the path to `loss` keep grad=None; read with
        `Tensor.grad_or_zeros()`.  Raises ShapeError unless `loss` is scalar.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        if loss.tape is not self:
            raise ValueError("loss tensor does not belong to this tape")
        for t in self.nodes:
            t.grad = None
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


class Tensor:
    """Immutable float64 array plus its position in the recorded graph."""

    __slots__ = ("data", "grad", "tape", "name", "_backward", "__weakref__")

    def __init__(self, data, tape: Tape | None = None, backward=None, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values in {name or 'tensor'}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.tape = tape
        self.name = name
        self._backward = backward
        if tape is not None:
            tape.nodes.append(self)

    @property
    def shape(self):
        return self.data.shape

    def grad_or_zeros(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"


def constant(data) -> Tensor:
    """A tensor outside any tape; no gradient flows into it."""
    return Tensor(data, tape=None)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.tape is None:
        return
    if t.grad is None:
        t.grad = np.array(g)  # copy: g may alias another node's grad buffer
    else:
        t.grad += g


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("operands belong to different tapes")
            tape = t.tape
    return tape


def _result(data, parents, backward, name) -> Tensor:
    out = Tensor(data, tape=_tape_of(*parents), backward=backward, name=name)
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _result(data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose requires rank-2 input, got {a.data.shape}")

    def backward(g):
        _accum(a, g.T)

    return _result(a.data.T.copy(), (a,), backward, "transpose")


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w with bias row broadcast onto every output row."""
    return add_rowvec(matmul(x, w), b)


def add_rowvec(a: Tensor, bias: Tensor) -> Tensor:
    """Add a length-n bias vector to every row of an (m, n) matrix."""
    if bias.data.ndim != 1 or a.data.ndim != 2 or a.data.shape[1] != bias.data.shape[0]:
        raise ShapeError(f"bias broadcast mismatch: {a.data.shape} + {bias.data.shape}")
    data = a.data + bias.data

    def backward(g):
        _accum(a, g)
        _accum(bias, g.sum(axis=0))

    return _result(data, (a, bias), backward, "add_rowvec")


# ---------------------------------------------------------------------------
# elementwise


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op} shape mismatch: {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _result(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accum(a, g * c)

    return _result(a.data * c, (a,), backward, "scale")


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (a.data > 0.0))

    return _result(data, (a,), backward, "relu")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - data * data))

    return _result(data, (a,), backward, "tanh")


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), evaluated on the stable branch for either sign."""
    data = np.logaddexp(0.0, a.data)

    def backward(g):
        # sigmoid(x), stable for large |x|
        x = a.data
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        _accum(a, g * sig)

    return _result(data, (a,), backward, "softplus")


# ---------------------------------------------------------------------------
# softmax / convolution


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction; rank-2, rows must be non-empty."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows requires rank-2 input, got {a.data.shape}")
    if a.data.shape[1] == 0:
        raise ShapeError("softmax_rows: empty rows")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        y = data
        _accum(a, y * (g - (g * y).sum(axis=1, keepdims=True)))

    return _result(data, (a,), backward, "softmax_rows")


def conv1d(x: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """Valid-mode 1-D correlation along the time axis.

    x: (T, c_in); kernel: (k, c_in, c_out); output: (T', c_out) with
    T' = (T - k)//stride + 1.  No padding, no kernel flip.
    """
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise ShapeError(f"conv1d expects x (T, c_in) and kernel (k, c_in, c_out), "
                         f"got {x.data.shape} and {kernel.data.shape}")
    T, c_in = x.data.shape
    k, kc_in, c_out = kernel.data.shape
    if kc_in != c_in:
        raise ShapeError(f"conv1d channel mismatch: input {c_in}, kernel {kc_in}")
    if k > T:
        raise ShapeError(f"conv1d kernel length {k} exceeds input length {T}")
    if stride < 1:
        raise ShapeError(f"conv1d stride must be positive, got {stride}")
    t_out = (T - k) // stride + 1
    ix = np.arange(t_out)[:, None] * stride + np.arange(k)[None, :]  # (T', k)
    cols = x.data[ix].reshape(t_out, k * c_in)
    w2 = kernel.data.reshape(k * c_in, c_out)
    data = cols @ w2

    def backward(g):
        _accum(kernel, (cols.T @ g).reshape(k, c_in, c_out))
        if x.tape is not None:
            gcols = (g @ w2.T).reshape(t_out, k, c_in)
            gx = np.zeros_like(x.data)
            np.add.at(gx, ix, gcols)
            _accum(x, gx)

    return _result(data, (x, kernel), backward, "conv1d")


def conv1d_bias(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """conv1d followed by a per-channel bias row."""
    return add_rowvec(conv1d(x, kernel, stride), bias)


# ---------------------------------------------------------------------------
# reductions / assembly


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _result(a.data.sum(), (a,), backward, "sum_all")


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def concat_rows(parts: list[Tensor]) -> Tensor:
    """Stack rank-2 tensors with equal column counts along axis 0."""
    if not parts:
        raise ShapeError("concat_rows: empty input")
    ncols = parts[0].data.shape[1]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[1] != ncols:
            raise ShapeError(f"concat_rows: incompatible shape {p.data.shape}")
    data = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi])

    return _result(data, tuple(parts), backward, "concat_rows")


def sum_rows(a: Tensor) -> Tensor:
    """Row sums of an (n, m) matrix as an (n, 1) column."""
    if a.data.ndim != 2:
        raise ShapeError(f"sum_rows requires rank-2 input, got {a.data.shape}")

    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _result(a.data.sum(axis=1, keepdims=True), (a,), backward, "sum_rows")


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if a.data.size != rows * cols:
        raise ShapeError(f"cannot reshape {a.data.shape} to ({rows}, {cols})")

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _result(a.data.reshape(rows, cols), (a,), backward, "reshape")


def repeat_rows(a: Tensor, r: int) -> Tensor:
    """Repeat each row of an (n, m) matrix r times consecutively."""
    if a.data.ndim != 2:
        raise ShapeError(f"repeat_rows requires rank-2 input, got {a.data.shape}")
    if r < 1:
        raise ShapeError(f"repeat count must be positive, got {r}")
    n, m = a.data.shape

    def backward(g):
        _accum(a, g.reshape(n, r, m).sum(axis=1))

    return _result(np.repeat(a.data, r, axis=0), (a,), backward, "repeat_rows")


def blocksum_rows(a: Tensor, r: int) -> Tensor:
    """Sum consecutive blocks of r rows: (n*r, m) -> (n, m)."""
    if a.data.ndim != 2 or a.data.shape[0] % r != 0:
        raise ShapeError(f"blocksum_rows: {a.data.shape} not divisible into rows of {r}")
    n = a.data.shape[0] // r
    m = a.data.shape[1]

    def backward(g):
        _accum(a, np.repeat(g, r, axis=0))

    return _result(a.data.reshape(n, r, m).sum(axis=1), (a,), backward, "blocksum_rows")


def mul_colvec(a: Tensor, c: Tensor) -> Tensor:
    """Multiply each row of an (n, m) matrix by the matching (n, 1) entry."""
    if a.data.ndim != 2 or c.data.shape != (a.data.shape[0], 1):
        raise ShapeError(f"mul_colvec mismatch: {a.data.shape} vs {c.data.shape}")

    def backward(g):
        _accum(a, g * c.data)
        _accum(c, (g * a.data).sum(axis=1, keepdims=True))

    return _result(a.data * c.data, (a, c), backward, "mul_colvec")


def im2col_blocks(x: Tensor, k: int, block_len: int) -> Tensor:
    """Sliding windows of width k inside each block of `block_len` rows.

    x is (n_blocks * block_len, c): n_blocks independent series stacked along
    axis 0.  Output is (n_blocks * t_out, k*c) with t_out = block_len - k + 1;
    row (b, t) holds x[b*block_len + t : ... + k] flattened.  Windows never
    cross block boundaries, so a stack of per-series convolutions becomes one
    matmul with a (k*c, c_out) kernel matrix.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"im2col_blocks requires rank-2 input, got {x.data.shape}")
    total, c = x.data.shape
    if block_len < 1 or total % block_len != 0:
        raise ShapeError(f"im2col_blocks: {total} rows not divisible into blocks of {block_len}")
    if k < 1 or k > block_len:
        raise ShapeError(f"im2col_blocks: window {k} invalid for block length {block_len}")
    n_blocks = total // block_len
    t_out = block_len - k + 1
    base = (np.arange(n_blocks)[:, None] * block_len
            + np.arange(t_out)[None, :]).reshape(-1, 1)       # (n_blocks*t_out, 1)
    ix = base + np.arange(k)[None, :]                          # (n_blocks*t_out, k)
    data = x.data[ix].reshape(n_blocks * t_out, k * c)

    def backward(g):
        if x.tape is not None:
            gx = np.zeros_like(x.data)
            np.add.at(gx, ix, g.reshape(-1, k, c))
            _accum(x, gx)

    return _result(data, (x,), backward, "im2col_blocks")


def custom(data, parents, backward, name: str) -> Tensor:
    """Hook for fused operations whose backward is supplied by the caller.

    The caller's `backward(g)` must route gradients to `parents` via
    `accumulate_grad`, the same discipline the built-in ops use.
    """
    return _result(data, parents, backward, name)


accumulate_grad = _accum
