"""Dense float64 tensors and reverse-mode automatic differentiation.

``Tensor`` is an immutable value (a read-only numpy array plus its shape).
``Node`` wraps a Tensor in the computation graph. Every operation below
accepts Tensors or Nodes; when at least one input is a Node the result is a
Node registered in the graph, otherwise a plain Tensor.

Gradients accumulate: calling ``backward`` twice without ``zero_grad``
doubles them. Training loops reset between steps.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, DomainError, NumericsError

_debug_nan = False


def set_debug_nan(enabled: bool) -> None:
    """When enabled, every op output is checked for NaN/Inf and raises."""
    global _debug_nan
    _debug_nan = bool(enabled)


class Tensor:
    """Immutable dense array of 64-bit floats, row-major."""

    __slots__ = ("_a",)

    def __init__(self, data, shape=None):
        a = np.array(data, dtype=np.float64, order="C")
        if shape is not None:
            a = a.reshape(shape)
        a.flags.writeable = False
        self._a = a

    @classmethod
    def _wrap(cls, a) -> "Tensor":
        """Adopt a freshly computed array without copying."""
        t = object.__new__(cls)
        if not isinstance(a, np.ndarray):
            a = np.asarray(a, dtype=np.float64)
        if not a.flags.c_contiguous:
            a = np.ascontiguousarray(a)
        a.flags.writeable = False
        t._a = a
        return t

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls._wrap(np.zeros(shape, dtype=np.float64))

    @classmethod
    def full(cls, shape, value: float) -> "Tensor":
        return cls._wrap(np.full(shape, value, dtype=np.float64))

    @property
    def shape(self):
        return self._a.shape

    @property
    def ndim(self):
        return self._a.ndim

    @property
    def size(self):
        return self._a.size

    @property
    def data(self) -> np.ndarray:
        """Read-only numpy view of the flat row-major payload."""
        return self._a

    def item(self) -> float:
        if self._a.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self._a.reshape(-1)[0])

    def __array__(self, dtype=None, copy=None):
        if dtype is not None and dtype != self._a.dtype:
            return self._a.astype(dtype)
        return self._a

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


class Node:
    """A value in the autodiff graph.

    ``grad`` materializes lazily as zeros of the value's shape; backward
    accumulates into it. Leaves created with ``param`` receive gradients,
    leaves created with ``constant`` do not (their grad stays zero).
    """

    __slots__ = ("value", "_grad", "op", "parents", "_bwd", "requires_grad")

    def __init__(self, value: Tensor, op: str = "leaf", parents=(), bwd=None,
                 requires_grad: bool = True):
        self.value = value
        self._grad = None
        self.op = op
        self.parents = parents
        self._bwd = bwd
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self) -> Tensor:
        if self._grad is None:
            return Tensor.zeros(self.value.shape)
        return Tensor._wrap(self._grad.copy())

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        return self.value.item()

    def _accum(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.zeros(self.value.shape, dtype=np.float64)
        self._grad += g

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.shape})"


def param(data, shape=None) -> Node:
    """A trainable leaf."""
    t = data if isinstance(data, Tensor) else Tensor(data, shape)
    return Node(t, op="param")


def constant(data, shape=None) -> Node:
    """A leaf that never receives gradient (its grad reads as zero)."""
    t = data if isinstance(data, Tensor) else Tensor(data, shape)
    return Node(t, op="const", requires_grad=False)


def _raw(x) -> np.ndarray:
    if isinstance(x, Node):
        return x.value._a
    if isinstance(x, Tensor):
        return x._a
    return np.asarray(x, dtype=np.float64)


def _node_inputs(*xs):
    return [x for x in xs if isinstance(x, Node)]


def _check_out(a: np.ndarray, op: str) -> np.ndarray:
    if _debug_nan and not np.all(np.isfinite(a)):
        raise NumericsError(f"non-finite values produced by {op}")
    return a


def _make(out: np.ndarray, op: str, inputs, bwd):
    """Wrap a computed array; build a graph node iff any input is a Node."""
    out = _check_out(out, op)
    nodes = _node_inputs(*inputs)
    if not nodes:
        return Tensor._wrap(out)
    rg = any(n.requires_grad for n in nodes)
    return Node(Tensor._wrap(out), op=op, parents=tuple(nodes),
                bwd=bwd if rg else None, requires_grad=rg)


def _wants(x) -> bool:
    return isinstance(x, Node) and x.requires_grad


# ---------------------------------------------------------------------------
# elementwise and broadcast primitives


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(x, y):
    a, b = _raw(x), _raw(y)
    _same_shape(a, b, "add")

    def bwd(g):
        if _wants(x):
            x._accum(g)
        if _wants(y):
            y._accum(g)

    return _make(a + b, "add", (x, y), bwd)


def sub(x, y):
    a, b = _raw(x), _raw(y)
    _same_shape(a, b, "sub")

    def bwd(g):
        if _wants(x):
            x._accum(g)
        if _wants(y):
            y._accum(-g)

    return _make(a - b, "sub", (x, y), bwd)


def mul(x, y):
    a, b = _raw(x), _raw(y)
    _same_shape(a, b, "mul")

    def bwd(g):
        if _wants(x):
            x._accum(g * b)
        if _wants(y):
            y._accum(g * a)

    return _make(a * b, "mul", (x, y), bwd)


def scale(x, s: float):
    a = _raw(x)
    s = float(s)

    def bwd(g):
        if _wants(x):
            x._accum(g * s)

    return _make(a * s, "scale", (x,), bwd)


def shift(x, c: float):
    """Add a scalar constant elementwise."""
    a = _raw(x)
    c = float(c)

    def bwd(g):
        if _wants(x):
            x._accum(g)

    return _make(a + c, "shift", (x,), bwd)


def tanh(x):
    a = _raw(x)
    out = np.tanh(a)

    def bwd(g):
        if _wants(x):
            x._accum(g * (1.0 - out * out))

    return _make(out, "tanh", (x,), bwd)


def sigmoid(x):
    a = _raw(x)
    out = 1.0 / (1.0 + np.exp(-a))

    def bwd(g):
        if _wants(x):
            x._accum(g * out * (1.0 - out))

    return _make(out, "sigmoid", (x,), bwd)


def exp(x):
    a = _raw(x)
    out = np.exp(a)

    def bwd(g):
        if _wants(x):
            x._accum(g * out)

    return _make(out, "exp", (x,), bwd)


def log(x):
    a = _raw(x)
    if np.any(a <= 0.0):
        raise DomainError("log of non-positive value")

    def bwd(g):
        if _wants(x):
            x._accum(g / a)

    return _make(np.log(a), "log", (x,), bwd)


def square(x):
    a = _raw(x)

    def bwd(g):
        if _wants(x):
            x._accum(g * (2.0 * a))

    return _make(a * a, "square", (x,), bwd)


def clamp(x, lo: float, hi: float):
    """Clip values to [lo, hi]; gradient passes only where unclipped."""
    a = _raw(x)
    out = np.clip(a, lo, hi)

    def bwd(g):
        if _wants(x):
            x._accum(g * ((a >= lo) & (a <= hi)))

    return _make(out, "clamp", (x,), bwd)


def add_bias(x, b):
    """x[..., n] + b[n], broadcasting over leading axes."""
    a, bv = _raw(x), _raw(b)
    if bv.ndim != 1 or a.shape[-1] != bv.shape[0]:
        raise DimensionError(f"add_bias: {a.shape} with bias {bv.shape}")

    def bwd(g):
        if _wants(x):
            x._accum(g)
        if _wants(b):
            b._accum(g.reshape(-1, bv.shape[0]).sum(axis=0))

    return _make(a + bv, "add_bias", (x, b), bwd)


def add_channel_bias(x, b):
    """x[B, C, H, W] + b[C] broadcast over batch and spatial axes."""
    a, bv = _raw(x), _raw(b)
    if a.ndim != 4 or bv.ndim != 1 or a.shape[1] != bv.shape[0]:
        raise DimensionError(f"add_channel_bias: {a.shape} with bias {bv.shape}")

    def bwd(g):
        if _wants(x):
            x._accum(g)
        if _wants(b):
            b._accum(g.sum(axis=(0, 2, 3)))

    return _make(a + bv[None, :, None, None], "add_channel_bias", (x, b), bwd)


# ---------------------------------------------------------------------------
# linear algebra and shape primitives


def matmul(x, y):
    a, b = _raw(x), _raw(y)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")

    def bwd(g):
        if _wants(x):
            x._accum(g @ b.T)
        if _wants(y):
            y._accum(a.T @ g)

    return _make(a @ b, "matmul", (x, y), bwd)


def transpose(x):
    a = _raw(x)
    if a.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")

    def bwd(g):
        if _wants(x):
            x._accum(g.T)

    return _make(a.T.copy(), "transpose", (x,), bwd)


def reshape(x, shape):
    a = _raw(x)

    def bwd(g):
        if _wants(x):
            x._accum(g.reshape(a.shape))

    return _make(a.reshape(shape).copy(), "reshape", (x,), bwd)


def sum_all(x):
    a = _raw(x)

    def bwd(g):
        if _wants(x):
            x._accum(np.full(a.shape, float(g)))

    return _make(np.array(a.sum()), "sum", (x,), bwd)


def mean_all(x):
    a = _raw(x)
    n = a.size

    def bwd(g):
        if _wants(x):
            x._accum(np.full(a.shape, float(g) / n))

    return _make(np.array(a.mean()), "mean", (x,), bwd)


def slice_cols(x, j0: int, j1: int):
    a = _raw(x)
    if a.ndim != 2 or not (0 <= j0 <= j1 <= a.shape[1]):
        raise DimensionError(f"slice_cols: [{j0}:{j1}] of {a.shape}")

    def bwd(g):
        if _wants(x):
            full = np.zeros(a.shape)
            full[:, j0:j1] = g
            x._accum(full)

    return _make(a[:, j0:j1].copy(), "slice_cols", (x,), bwd)


def concat_cols(x, y):
    a, b = _raw(x), _raw(y)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat_cols: {a.shape} with {b.shape}")
    na = a.shape[1]

    def bwd(g):
        if _wants(x):
            x._accum(g[:, :na])
        if _wants(y):
            y._accum(g[:, na:])

    return _make(np.concatenate([a, b], axis=1), "concat_cols", (x, y), bwd)


# ---------------------------------------------------------------------------
# convolution (cross-correlation convention)


def _conv_out_dim(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col(x, kh, kw, stride, pad):
    """x[B,C,H,W] -> cols[B, C*kh*kw, Ho*Wo]."""
    b, c, h, w = x.shape
    ho = _conv_out_dim(h, kh, stride, pad)
    wo = _conv_out_dim(w, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [B,C,Ho,Wo,kh,kw]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols, xshape, kh, kw, stride, pad, ho, wo):
    """Adjoint of _im2col: scatter cols[B, C*kh*kw, Ho*Wo] back to x."""
    b, c, h, w = xshape
    buf = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    g = cols.reshape(b, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            buf[:, :, i : i + stride * ho : stride,
                j : j + stride * wo : stride] += g[:, :, i, j]
    if pad:
        return buf[:, :, pad:-pad, pad:-pad]
    return buf


def _promote_batch(a):
    if a.ndim == 3:
        return a[None], True
    if a.ndim == 4:
        return a, False
    raise DimensionError(f"expected 3-D or 4-D input, got {a.shape}")


def conv2d(x, w, stride: int = 1, padding: int = 0):
    """Cross-correlate x[(B,)C,H,W] with kernels w[Co,Ci,kh,kw]."""
    a = _raw(x)
    wv = _raw(w)
    a4, squeeze = _promote_batch(a)
    bsz, ci, h, wd = a4.shape
    co, ci_k, kh, kw = wv.shape
    if ci != ci_k:
        raise DimensionError(f"conv2d: input channels {ci} != kernel {ci_k}")
    ho = _conv_out_dim(h, kh, stride, padding)
    wo = _conv_out_dim(wd, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: non-positive output {ho}x{wo}")
    cols, _, _ = _im2col(a4, kh, kw, stride, padding)
    wm = wv.reshape(co, ci * kh * kw)
    out = np.matmul(wm, cols).reshape(bsz, co, ho, wo)
    if squeeze:
        out = out[0]

    def bwd(g):
        g4 = g[None] if squeeze else g
        gm = g4.reshape(bsz, co, ho * wo)
        if _wants(w):
            gw = np.tensordot(gm, cols, axes=([0, 2], [0, 2]))
            w._accum(gw.reshape(wv.shape))
        if _wants(x):
            gcols = np.matmul(wm.T, gm)
            gx = _col2im(gcols, a4.shape, kh, kw, stride, padding, ho, wo)
            x._accum(gx[0] if squeeze else gx)

    return _make(out, "conv2d", (x, w), bwd)


def conv2d_transpose(x, w, stride: int = 1, padding: int = 0,
                     output_padding: int = 0):
    """Transposed convolution: x[(B,)Ci,H,W], w[Ci,Co,kh,kw].

    Output spatial size is (H-1)*stride - 2*padding + kh + output_padding;
    output_padding must be < stride.
    """
    a = _raw(x)
    wv = _raw(w)
    a4, squeeze = _promote_batch(a)
    bsz, ci, h, wd = a4.shape
    ci_k, co, kh, kw = wv.shape
    if ci != ci_k:
        raise DimensionError(f"conv2d_transpose: channels {ci} != {ci_k}")
    if not 0 <= output_padding < max(stride, 1):
        raise DimensionError("output_padding must be in [0, stride)")
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (wd - 1) * stride - 2 * padding + kw + output_padding
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d_transpose: non-positive output {ho}x{wo}")
    wm = wv.reshape(ci, co * kh * kw)
    xm = a4.reshape(bsz, ci, h * wd)
    cols = np.matmul(wm.T, xm)
    out = _col2im(cols, (bsz, co, ho, wo), kh, kw, stride, padding, h, wd)
    if squeeze:
        out = out[0]

    def bwd(g):
        g4 = g[None] if squeeze else g
        gcols, _, _ = _im2col(g4, kh, kw, stride, padding)
        if _wants(x):
            gx = np.matmul(wm, gcols).reshape(a4.shape)
            x._accum(gx[0] if squeeze else gx)
        if _wants(w):
            gw = np.tensordot(xm, gcols, axes=([0, 2], [0, 2]))
            w._accum(gw.reshape(wv.shape))

    return _make(out, "conv2d_transpose", (x, w), bwd)


# ---------------------------------------------------------------------------
# backward pass


def backward(root: Node) -> None:
    """Reverse-mode sweep from a scalar root; grads accumulate on leaves."""
    if not isinstance(root, Node):
        raise ContractError("backward needs a graph Node")
    if root.value.size != 1:
        raise ContractError(f"backward root must be scalar, got {root.shape}")

    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    root._accum(np.ones(root.value.shape))
    for node in reversed(topo):
        if node._bwd is not None and node._grad is not None:
            node._bwd(node._grad)


# ---------------------------------------------------------------------------
# explicit input gradients of tanh MLPs (differentiable wrt parameters)


def mlp_forward(layers, x):
    """Feed-forward through affine layers with tanh between them.

    ``layers`` is a sequence of (W, b) pairs; the final layer is linear.
    """
    h = x
    last = len(layers) - 1
    for i, (wi, bi) in enumerate(layers):
        h = add_bias(matmul(h, wi), bi)
        if i != last:
            h = tanh(h)
    return h


def input_gradient(layers, x):
    """Gradient of a scalar tanh MLP wrt its input, built as graph nodes.

    The layer chain rule is composed explicitly from affine transposes and
    (1 - tanh^2) factors, so the returned gradient is itself differentiable
    with respect to the layer parameters (double backprop without a
    second engine). Only affine layers with tanh hidden activations are
    supported; the final layer must have output width 1.
    """
    if not layers:
        raise ContractError("input_gradient: empty layer list")
    w_last = _raw(layers[-1][0])
    if w_last.ndim != 2 or w_last.shape[1] != 1:
        raise ContractError("input_gradient: network output must be scalar")

    a = _raw(x)
    flat = a.ndim == 1
    if flat:
        x = reshape(x, (1, a.shape[0]))
    bsz = _raw(x).shape[0]

    hidden = []
    h = x
    for wi, bi in layers[:-1]:
        h = tanh(add_bias(matmul(h, wi), bi))
        hidden.append(h)

    ones = constant(Tensor.full((bsz, 1), 1.0))
    g = matmul(ones, transpose(layers[-1][0]))
    for (wi, _), hi in zip(reversed(layers[:-1]), reversed(hidden)):
        g = mul(g, shift(scale(square(hi), -1.0), 1.0))  # 1 - h^2
        g = matmul(g, transpose(wi))
    if flat:
        g = reshape(g, (a.shape[0],))
    return g
