"""Reverse-mode automatic differentiation over dense float64 tensors.

The graph is dynamic: every primitive that touches a tensor requiring
gradients records the inputs and a backward closure on the output tensor,
tagged with a monotonically increasing sequence number. ``backward`` walks
the reachable nodes in exact reverse insertion order, which makes gradient
accumulation deterministic. Calling ``backward`` twice on the same graph
without re-running the forward pass yields identical gradients (grads of
the reachable subgraph are reset before accumulation).

All values are 64-bit floats. Shape rules are strict and documented per
primitive; there is no general broadcasting.
"""

from __future__ import annotations

import itertools

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to a primitive's rule."""


_seq_counter = itertools.count()


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


class Tensor:
    """Dense float64 array participating in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_seq", "_inputs", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_f64(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._seq = next(_seq_counter)
        self._inputs: tuple[Tensor, ...] | None = None
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Copy of the value with no graph history."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # Operator sugar; the canonical API is the module-level primitives.
    def __add__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap a primitive's output, recording the node if gradients are needed."""
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    if out.requires_grad:
        out._inputs = inputs
        out._backward = backward_fn
    return out


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} produced non-finite values")


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-D (n, k) by a 2-D (k, m) tensor."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(out_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum. Shapes must match exactly, or b may be a (m,) bias
    added to every row of a (..., m) tensor."""
    bias = b.data.ndim == 1 and a.data.ndim >= 2 and a.shape[-1] == b.shape[0]
    if not bias and a.shape != b.shape:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data + b.data

    def backward(g):
        ga = g if a.requires_grad else None
        if not b.requires_grad:
            gb = None
        elif bias:
            gb = g.reshape(-1, b.shape[0]).sum(axis=0)
        else:
            gb = g
        return ga, gb

    return _make(out_data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data - b.data

    def backward(g):
        return (g if a.requires_grad else None,
                -g if b.requires_grad else None)

    return _make(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out_data = a.data * b.data

    def backward(g):
        return (g * b.data if a.requires_grad else None,
                g * a.data if b.requires_grad else None)

    return _make(out_data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    c = float(c)

    def backward(g):
        return (g * c,)

    return _make(a.data * c, (a,), backward)


def add_const(a: Tensor, c: float) -> Tensor:
    """Add a python constant elementwise."""

    def backward(g):
        return (g,)

    return _make(a.data + float(c), (a,), backward)


def concat(tensors: list[Tensor] | tuple[Tensor, ...], axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; all other dimensions must agree."""
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat: empty input list")
    ndim = tensors[0].data.ndim
    ax = axis if axis >= 0 else ndim + axis
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != ndim or other[:ax] != ref[:ax] or other[ax + 1:] != ref[ax + 1:]:
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape} on axis {axis}")
    out_data = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        grads = []
        for i, t in enumerate(tensors):
            if t.requires_grad:
                idx = [slice(None)] * ndim
                idx[ax] = slice(offsets[i], offsets[i + 1])
                grads.append(np.ascontiguousarray(g[tuple(idx)]))
            else:
                grads.append(None)
        return tuple(grads)

    return _make(out_data, tensors, backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    ndim = a.data.ndim
    ax = axis if axis >= 0 else ndim + axis
    if not (0 <= ax < ndim) or start < 0 or start + length > a.shape[ax]:
        raise ShapeError(f"narrow: slice [{start}:{start + length}) on axis {axis} "
                         f"out of bounds for shape {a.shape}")
    idx = [slice(None)] * ndim
    idx[ax] = slice(start, start + length)
    out_data = np.ascontiguousarray(a.data[tuple(idx)])

    def backward(g):
        full = np.zeros_like(a.data)
        full[tuple(idx)] = g
        return (full,)

    return _make(out_data, (a,), backward)


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows of a (n, ...) tensor by an integer index array.

    Rows may repeat; backward scatter-adds into the source rows.
    """
    idx = np.asarray(indices, dtype=np.intp)
    if a.data.ndim < 1:
        raise ShapeError("gather_rows: input must have at least one axis")
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= a.shape[0])):
        raise ShapeError(f"gather_rows: indices out of range for {a.shape[0]} rows")
    out_data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(out_data, (a,), backward)


def repeat_rows(a: Tensor, k: int) -> Tensor:
    """Repeat each row of a (n, d) tensor k times -> (n*k, d).

    Same result as gather_rows with repeated indices but with a dense
    backward (sum over the repeat axis).
    """
    if a.data.ndim != 2 or k < 1:
        raise ShapeError(f"repeat_rows: need a 2-D tensor and k >= 1, got {a.shape}, k={k}")
    n, d = a.shape
    out_data = np.repeat(a.data, k, axis=0)

    def backward(g):
        return (g.reshape(n, k, d).sum(axis=1),)

    return _make(out_data, (a,), backward)


def gather_blocks(a: Tensor, offsets, block: int) -> Tensor:
    """Stack contiguous row blocks ``a[o:o+block]`` for each offset.

    a: (n, d); offsets: (m,) ints; output (m*block, d). Offsets may repeat;
    backward sums densely per distinct offset, which is much faster than a
    scatter-add when few distinct blocks are gathered many times.
    """
    offsets = np.asarray(offsets, dtype=np.intp)
    if a.data.ndim != 2 or offsets.ndim != 1:
        raise ShapeError(f"gather_blocks: tensor {a.shape}, offsets {offsets.shape}")
    if offsets.size and (offsets.min() < 0 or offsets.max() + block > a.shape[0]):
        raise ShapeError(f"gather_blocks: block [o, o+{block}) out of range for {a.shape[0]} rows")
    m = offsets.size
    idx = (offsets[:, None] + np.arange(block, dtype=np.intp)[None, :]).reshape(-1)
    out_data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        gr = g.reshape(m, block, a.shape[1])
        for off in np.unique(offsets):
            full[off:off + block] += gr[offsets == off].sum(axis=0)
        return (full,)

    return _make(out_data, (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape

    def backward(g):
        return (g.reshape(old),)

    return _make(a.data.reshape(shape), (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # evaluate from the negative side to avoid overflow in exp
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        return (g * out_data * (1.0 - out_data),)

    return _make(out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out_data * out_data),)

    return _make(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0.0),)

    return _make(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    """Natural log; inputs must be strictly positive."""
    if np.any(a.data <= 0.0):
        raise FloatingPointError("log: non-positive input")
    out_data = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return _make(out_data, (a,), backward)


def square(a: Tensor) -> Tensor:
    out_data = a.data * a.data

    def backward(g):
        return (g * 2.0 * a.data,)

    return _make(out_data, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis; outputs are nonnegative and sum to 1."""
    x = a.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        return (out_data * (g - dot),)

    return _make(out_data, (a,), backward)


def masked_softmax(logits: Tensor, counts) -> Tensor:
    """Row-wise softmax over the first ``counts[i]`` entries of each row.

    Entries beyond the count get exactly zero weight, and the result for a
    row depends only on its first counts[i] logits, so appending padding
    columns leaves real weights bit-identical. Rows with count 0 are all
    zero.
    """
    counts = np.asarray(counts, dtype=np.intp)
    if logits.data.ndim != 2 or counts.shape != (logits.shape[0],):
        raise ShapeError(f"masked_softmax: logits {logits.shape} vs counts {counts.shape}")
    if counts.size and (counts.min() < 0 or counts.max() > logits.shape[1]):
        raise ShapeError("masked_softmax: counts out of range")
    out_data = np.zeros_like(logits.data)
    for i, k in enumerate(counts):
        if k == 0:
            continue
        row = logits.data[i, :k]
        e = np.exp(row - row.max())
        out_data[i, :k] = e / e.sum()

    def backward(g):
        dx = np.zeros_like(logits.data)
        for i, k in enumerate(counts):
            if k == 0:
                continue
            y = out_data[i, :k]
            gi = g[i, :k]
            dx[i, :k] = y * (gi - np.dot(y, gi))
        return (dx,)

    return _make(out_data, (logits,), backward)


def masked_weighted_sum(weights: Tensor, values: Tensor, counts) -> Tensor:
    """Per-row weighted sum ``out[i] = sum_j weights[i,j] * values[i,j,:]``
    taken over the first counts[i] entries only.

    weights: (n, m); values: (n, m, d); counts: (n,). Rows with count 0
    produce a zero vector. Restricting to the prefix keeps the output
    bit-identical when padding entries are appended.
    """
    counts = np.asarray(counts, dtype=np.intp)
    if (weights.data.ndim != 2 or values.data.ndim != 3
            or weights.shape != values.shape[:2] or counts.shape != (weights.shape[0],)):
        raise ShapeError(f"masked_weighted_sum: weights {weights.shape} vs values {values.shape}")
    n, _, d = values.shape
    out_data = np.zeros((n, d))
    for i, k in enumerate(counts):
        if k:
            out_data[i] = weights.data[i, :k] @ values.data[i, :k, :]

    def backward(g):
        gw = np.zeros_like(weights.data) if weights.requires_grad else None
        gv = np.zeros_like(values.data) if values.requires_grad else None
        for i, k in enumerate(counts):
            if not k:
                continue
            if gw is not None:
                gw[i, :k] = values.data[i, :k, :] @ g[i]
            if gv is not None:
                gv[i, :k, :] = np.outer(weights.data[i, :k], g[i])
        return gw, gv

    return _make(out_data, (weights, values), backward)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """2-D convolution with stride 1 and 'same' zero padding.

    x: (H, W, Cin); kernel: (kh, kw, Cin, Cout) with odd kh, kw; bias: (Cout,).
    """
    if x.data.ndim != 3 or kernel.data.ndim != 4 or x.shape[2] != kernel.shape[2]:
        raise ShapeError(f"conv2d: input {x.shape} vs kernel {kernel.shape}")
    kh, kw, cin, cout = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("conv2d: kernel sides must be odd")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias {bias.shape} vs {cout} output channels")
    h, w, _ = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((ph, ph), (pw, pw), (0, 0)))
    out_data = np.zeros((h, w, cout))
    flat = out_data.reshape(h * w, cout)
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[dy:dy + h, dx:dx + w, :].reshape(h * w, cin)
            flat += patch @ kernel.data[dy, dx]
    out_data += bias.data

    def backward(g):
        gflat = g.reshape(h * w, cout)
        gx = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for dy in range(kh):
                for dx in range(kw):
                    gxp[dy:dy + h, dx:dx + w, :] += (gflat @ kernel.data[dy, dx].T).reshape(h, w, cin)
            gx = gxp[ph:ph + h, pw:pw + w, :]
        gk = None
        if kernel.requires_grad:
            gk = np.zeros_like(kernel.data)
            for dy in range(kh):
                for dx in range(kw):
                    patch = xp[dy:dy + h, dx:dx + w, :].reshape(h * w, cin)
                    gk[dy, dx] = patch.T @ gflat
        gb = g.sum(axis=(0, 1)) if bias.requires_grad else None
        return gx, gk, gb

    return _make(out_data, (x, kernel, bias), backward)


def sum_all(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out_data = np.asarray(a.data.sum())

    def backward(g):
        return (np.full_like(a.data, float(g)),)

    return _make(out_data, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    """Mean of all elements, as a scalar tensor."""
    n = a.size
    out_data = np.asarray(a.data.mean())

    def backward(g):
        return (np.full_like(a.data, float(g) / n),)

    return _make(out_data, (a,), backward)


def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Elementwise binary cross-entropy from raw logits.

    Numerically stable softplus form; labels are constants in {0, 1}.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: logits {logits.shape} vs labels {y.shape}")
    if np.any((y != 0.0) & (y != 1.0)):
        raise ValueError("bce_with_logits: labels must be 0 or 1")
    x = logits.data
    out_data = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return (g * (s - y),)

    return _make(out_data, (logits,), backward)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every reachable tensor that requires gradients.

    ``loss`` must be a scalar. Nodes are visited in exact reverse insertion
    order; grads of the reachable subgraph are reset first, so repeated
    calls without a new forward pass give identical results. Tensors not
    reachable from the loss are untouched (their grad stays None, i.e. zero).
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    # collect the reachable subgraph
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        nodes.append(t)
        if t._inputs is not None:
            stack.extend(t._inputs)
    for t in nodes:
        t.grad = None
    loss.grad = np.ones(())
    # reverse insertion order is a valid topological order
    nodes.sort(key=lambda t: t._seq, reverse=True)
    for t in nodes:
        if t._backward is None or t.grad is None:
            continue
        grads = t._backward(t.grad)
        for inp, g in zip(t._inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            if inp.grad is None:
                inp.grad = np.zeros_like(inp.data)
            inp.grad += g
