"""Reverse-mode automatic differentiation on dense numpy arrays.

Covers exactly the operations the super-resolution networks need: 1-D
convolution, a handful of elementwise ops, channel concatenation, a dense
head, and full-array reductions.  The graph is rebuilt on every forward pass:
each op returns a fresh Tensor that remembers its inputs and a closure that
routes the incoming gradient to them.  ``Tensor.backward()`` walks the graph
once in reverse topological order.

float32 is the training precision.  All ops are dtype-generic, so building
tensors from float64 arrays gives the precision finite-difference checks
need.  No op mutates its inputs, and every op verifies its result is finite
(a NaN/Inf anywhere is treated as a hard error, not a value).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "add",
    "sub",
    "mul",
    "mul_scalar",
    "neg",
    "square",
    "log",
    "clamp_min",
    "sigmoid",
    "leaky_relu",
    "relu",
    "mean_all",
    "concat_channels",
    "flatten",
    "dense",
    "conv1d",
    "Adam",
    "zero_grads",
]

_FLOAT_DTYPES = (np.float32, np.float64)


def _as_array(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float32)
    return arr


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{op} produced a non-finite value")


class Tensor:
    """Dense array plus the bookkeeping needed for reverse-mode gradients.

    ``grad`` is populated by ``backward()`` for every tensor in the graph
    with ``requires_grad=True``; it is ``None`` until then.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph."""
        return Tensor(self.data, requires_grad=False)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.ndim != 0:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward on a tensor that is detached from the graph")

        order = _toposort(self)
        self.grad = np.ones((), dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


def _toposort(root):
    """Iterative DFS; every node's parents precede it in the result."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _make(data, parents, backward, op):
    """Wrap an op result; record the graph only if a parent needs gradients."""
    _check_finite(data, op)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad += g


def _require_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _coerce_operand(x, like):
    """Python scalars participate as gradient-free constants."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full_like(like.data, float(x)))


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b) -> Tensor:
    b = _coerce_operand(b, a)
    _require_same_shape(a, b, "add")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a: Tensor, b) -> Tensor:
    b = _coerce_operand(b, a)
    _require_same_shape(a, b, "sub")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make(a.data * b.data, (a, b), backward, "mul")


def mul_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accumulate(a, g * c)

    return _make(a.data * c, (a,), backward, "mul_scalar")


def neg(a: Tensor) -> Tensor:
    return mul_scalar(a, -1.0)


def square(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g * (2.0 * a.data))

    return _make(a.data * a.data, (a,), backward, "square")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise ValueError("log requires strictly positive input")

    def backward(g):
        _accumulate(a, g / a.data)

    return _make(np.log(a.data), (a,), backward, "log")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient passes only where a >= floor."""
    floor = float(floor)
    mask = a.data >= floor

    def backward(g):
        _accumulate(a, g * mask)

    return _make(np.maximum(a.data, floor), (a,), backward, "clamp_min")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accumulate(a, g * out * (1.0 - out))

    return _make(out, (a,), backward, "sigmoid")


def leaky_relu(a: Tensor, alpha: float) -> Tensor:
    alpha = float(alpha)
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"leaky_relu alpha must be in [0, 1), got {alpha}")
    positive = a.data >= 0

    def backward(g):
        _accumulate(a, g * np.where(positive, 1.0, alpha).astype(a.data.dtype))

    return _make(np.where(positive, a.data, alpha * a.data), (a,), backward, "leaky_relu")


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, 0.0)


# ---------------------------------------------------------------------------
# reductions and shape ops


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    if n == 0:
        raise ValueError("mean_all of an empty tensor")

    def backward(g):
        _accumulate(a, np.full_like(a.data, g / n))

    return _make(np.mean(a.data), (a,), backward, "mean_all")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Join along the channel axis; a's channels come first."""
    if a.ndim != 3 or b.ndim != 3:
        raise ValueError("concat_channels expects rank-3 tensors")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ValueError(f"concat_channels: batch/time mismatch {a.shape} vs {b.shape}")
    ca = a.shape[1]

    def backward(g):
        _accumulate(a, g[:, :ca, :])
        _accumulate(b, g[:, ca:, :])

    return _make(np.concatenate((a.data, b.data), axis=1), (a, b), backward, "concat_channels")


def flatten(a: Tensor) -> Tensor:
    """(batch, channels, time) -> (batch, channels*time)."""
    if a.ndim != 3:
        raise ValueError("flatten expects a rank-3 tensor")
    shape = a.data.shape

    def backward(g):
        _accumulate(a, g.reshape(shape))

    return _make(a.data.reshape(shape[0], -1), (a,), backward, "flatten")


def dense(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """y = x @ W.T + b for flattened (batch, features) input."""
    if x.ndim != 2 or weights.ndim != 2:
        raise ValueError("dense expects (batch, features) input and (out, features) weights")
    if x.shape[1] != weights.shape[1]:
        raise ValueError(f"dense: feature mismatch {x.shape[1]} vs {weights.shape[1]}")
    if bias.shape != (weights.shape[0],):
        raise ValueError(f"dense: bias shape {bias.shape} != ({weights.shape[0]},)")

    def backward(g):
        _accumulate(x, g @ weights.data)
        _accumulate(weights, g.T @ x.data)
        _accumulate(bias, g.sum(axis=0))

    return _make(x.data @ weights.data.T + bias.data, (x, weights, bias), backward, "dense")


# ---------------------------------------------------------------------------
# convolution


def _correlate_same(x, kernel, stride=1):
    """Same-zero-padded cross-correlation of (B, Ci, T) with (Co, Ci, W)."""
    width = kernel.shape[2]
    pad = width // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    windows = sliding_window_view(padded, width, axis=2)
    if stride != 1:
        windows = windows[:, :, ::stride, :]
    # (B, Ci, To, W) x (Co, Ci, W) -> (B, To, Co)
    out = np.tensordot(windows, kernel, axes=([1, 3], [1, 2]))
    return np.ascontiguousarray(out.transpose(0, 2, 1)), windows


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Same-padded 1-D cross-correlation.

    ``x`` is (batch, in_ch, time), ``kernel`` (out_ch, in_ch, width) with odd
    width, ``bias`` (out_ch,).  ``stride`` > 1 keeps every stride-th output
    position; time must then be divisible by the stride.  Output time length
    is time // stride.
    """
    if x.ndim != 3:
        raise ValueError(f"conv1d input must be rank 3, got shape {x.shape}")
    if kernel.ndim != 3:
        raise ValueError(f"conv1d kernel must be rank 3, got shape {kernel.shape}")
    out_ch, in_ch, width = kernel.shape
    if width % 2 == 0:
        raise ValueError(f"conv1d kernel width must be odd, got {width}")
    if x.shape[1] != in_ch:
        raise ValueError(f"conv1d: input has {x.shape[1]} channels, kernel expects {in_ch}")
    if bias.shape != (out_ch,):
        raise ValueError(f"conv1d: bias shape {bias.shape} != ({out_ch},)")
    stride = int(stride)
    if stride < 1:
        raise ValueError(f"conv1d stride must be >= 1, got {stride}")
    if x.shape[2] % stride != 0:
        raise ValueError(f"conv1d: time {x.shape[2]} not divisible by stride {stride}")

    out, _ = _correlate_same(x.data, kernel.data, stride)
    out += bias.data[None, :, None]

    def backward(g):
        _accumulate(bias, g.sum(axis=(0, 2)))
        if kernel.requires_grad:
            pad = width // 2
            padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
            windows = sliding_window_view(padded, width, axis=2)
            if stride != 1:
                windows = windows[:, :, ::stride, :]
            # (B, Co, To) x (B, Ci, To, W) -> (Co, Ci, W)
            _accumulate(kernel, np.tensordot(g, windows, axes=([0, 2], [0, 2])))
        if x.requires_grad:
            if stride == 1:
                gz = g
            else:
                gz = np.zeros((g.shape[0], out_ch, x.shape[2]), dtype=g.dtype)
                gz[:, :, ::stride] = g
            # correlation with the transposed, flipped kernel inverts the forward map
            kt = np.ascontiguousarray(kernel.data.transpose(1, 0, 2)[:, :, ::-1])
            gx, _ = _correlate_same(gz, kt)
            _accumulate(x, gx)

    return _make(out, (x, kernel, bias), backward, "conv1d")


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with bias correction over a named parameter dict.

    ``step`` reads each parameter's ``.grad`` (``None`` counts as zero) and
    updates parameter data in place.  Moments live in float arrays matching
    each parameter, so optimizer state serializes exactly.
    """

    def __init__(self, params: dict, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ValueError(f"adam: gradient shape {g.shape} != param shape {p.data.shape} for {name}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict:
        """Moment arrays keyed for checkpointing."""
        out = {}
        for name in self.params:
            out[f"{name}.m"] = self.m[name]
            out[f"{name}.v"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict, t: int) -> None:
        self.t = int(t)
        for name in self.params:
            self.m[name] = np.array(arrays[f"{name}.m"])
            self.v[name] = np.array(arrays[f"{name}.v"])


def zero_grads(params) -> None:
    """Clear gradients on a dict or iterable of tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None
