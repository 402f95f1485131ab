"""Reverse-mode automatic differentiation over dense numpy arrays.

Every learnable operation in the network is built from the primitives in
this module.  Tensors are immutable after construction; an operation
records its parents and a backward closure, and ``Tensor.backward`` walks
the graph once in reverse topological order.

Two precisions are supported: float64 for verification (finite-difference
gradient checks) and float32 for training/inference.  All computation is
serial numpy, so forward results are bitwise reproducible for a fixed
seed and evaluation order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """A dense nd-array node in a reverse-mode differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "op")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self.op = "leaf"

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self.op})"

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype):
        t = Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)
        if t.requires_grad and _grad_enabled:
            src_dtype = self.data.dtype

            def bw(g):
                _accum(self, g.astype(src_dtype))

            t._parents = (self,)
            t._backward_fn = bw
            t.op = "astype"
        return t

    # -- graph traversal -----------------------------------------------------

    def parents(self):
        return self._parents

    def leaves(self):
        """All leaf tensors reachable from this node (dependency inspection)."""
        seen = set()
        out = []
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            if node._parents:
                stack.extend(node._parents)
            else:
                out.append(node)
        return out

    def depends_on(self, other):
        """Whether ``other`` appears anywhere in this node's ancestry."""
        seen = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if node is other:
                return True
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.extend(node._parents)
        return False

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)
                if node._parents:
                    node.grad = None  # free intermediate grads

    def zero_grad(self):
        self.grad = None

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __rsub__(self, other):
        return add(_wrap(other), -self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self):
        return sum_(self)

    def mean(self):
        return mean(self)

    def abs(self):
        return abs_(self)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)


def _wrap(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, copy=True)
    else:
        t.grad = t.grad + g


def _make(data, parents, backward_fn, op):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
        out.op = op
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b, like=a)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw, "add")


def mul(a, b):
    a, b = _wrap(a), _wrap(b, like=a)

    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw, "mul")


def leaky_relu(x, slope=0.1):
    """Elementwise max(x, slope*x); the subgradient at 0 takes the positive branch."""
    if not (0.0 < slope < 1.0):
        raise ValueError(f"leaky_relu slope must lie in (0,1), got {slope}")
    x = _wrap(x)
    pos = x.data >= 0

    def bw(g):
        _accum(x, g * np.where(pos, 1.0, slope))

    return _make(np.where(pos, x.data, slope * x.data), (x,), bw, "leaky_relu")


def relu(x):
    x = _wrap(x)
    pos = x.data >= 0

    def bw(g):
        _accum(x, g * pos)

    return _make(np.where(pos, x.data, 0.0), (x,), bw, "relu")


def sigmoid(x):
    """Numerically stable logistic; saturates to 0/1 without overflow."""
    x = _wrap(x)
    d = x.data
    out = np.empty_like(d)
    p = d >= 0
    out[p] = 1.0 / (1.0 + np.exp(-d[p]))
    e = np.exp(d[~p])
    out[~p] = e / (1.0 + e)

    def bw(g):
        _accum(x, g * out * (1.0 - out))

    return _make(out, (x,), bw, "sigmoid")


def abs_(x):
    x = _wrap(x)
    s = np.sign(x.data)

    def bw(g):
        _accum(x, g * s)

    return _make(np.abs(x.data), (x,), bw, "abs")


def sum_(x):
    x = _wrap(x)

    def bw(g):
        _accum(x, np.broadcast_to(g, x.shape).astype(x.dtype))

    return _make(np.asarray(x.data.sum(), dtype=x.dtype), (x,), bw, "sum")


def mean(x):
    x = _wrap(x)
    n = x.size

    def bw(g):
        _accum(x, np.broadcast_to(g / n, x.shape).astype(x.dtype))

    return _make(np.asarray(x.data.mean(), dtype=x.dtype), (x,), bw, "mean")


# -- shape manipulation ---------------------------------------------------------


def reshape(x, shape):
    x = _wrap(x)
    orig = x.shape

    def bw(g):
        _accum(x, g.reshape(orig))

    return _make(x.data.reshape(shape), (x,), bw, "reshape")


def transpose(x, axes):
    x = _wrap(x)
    axes = tuple(axes)
    inv = np.argsort(axes)

    def bw(g):
        _accum(x, g.transpose(inv))

    return _make(x.data.transpose(axes), (x,), bw, "transpose")


def getitem(x, idx):
    x = _wrap(x)

    def bw(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[idx] += g
        _accum(x, gx)

    return _make(x.data[idx], (x,), bw, "getitem")


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def stack(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]

    def bw(g):
        for i, t in enumerate(tensors):
            _accum(t, np.take(g, i, axis=axis))

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, bw, "stack")


# -- convolution ----------------------------------------------------------------


def _pad_spatial(arr, pads, mode):
    if all(p == 0 for p in pads):
        return arr
    width = [(0, 0)] * (arr.ndim - len(pads)) + [(p, p) for p in pads]
    if mode == "zeros":
        return np.pad(arr, width)
    return np.pad(arr, width, mode="edge")


def conv2d(x, weight, bias=None, stride=1, padding=None, padding_mode="zeros"):
    """2-D cross-correlation.

    ``x`` is (C,H,W) or (N,C,H,W); ``weight`` is (C_out, C_in, K, K) with K
    odd.  Default padding (K-1)//2 preserves spatial extent at stride 1.
    ``padding_mode`` is "zeros" (standard) or "replicate".
    """
    x, weight = _wrap(x), _wrap(weight)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 3/4-D input and 4-D weight, got {x.shape}, {weight.shape}")
    n, c_in, h, w = xd.shape
    c_out, c_in_w, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square and odd, got {kh}x{kw}")
    if c_in != c_in_w:
        raise ShapeError(f"conv2d channel mismatch: input has {c_in}, weight expects {c_in_w}")
    k = kh
    p = (k - 1) // 2 if padding is None else padding
    s = stride
    xp = _pad_spatial(xd, (p, p), padding_mode)
    hp, wp = xp.shape[2], xp.shape[3]
    ho = (hp - k) // s + 1
    wo = (wp - k) // s + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]  # (N,C,Ho,Wo,K,K)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c_in * k * k)
    wmat = weight.data.reshape(c_out, c_in * k * k)
    out = (cols @ wmat.T).reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    parents = [x, weight]
    if bias is not None:
        bias = _wrap(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv2d bias must have shape ({c_out},), got {bias.shape}")
        out = out + bias.data[:, None, None]
        parents.append(bias)

    def bw(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
        if weight.requires_grad:
            _accum(weight, (gmat.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dcols = (gmat @ wmat).reshape(n, ho, wo, c_in, k, k)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            if p > 0:
                if padding_mode == "replicate":
                    # fold replicated-border gradients back onto edge pixels
                    dxp[:, :, p, :] += dxp[:, :, :p, :].sum(axis=2)
                    dxp[:, :, hp - p - 1, :] += dxp[:, :, hp - p :, :].sum(axis=2)
                    dxp[:, :, :, p] += dxp[:, :, :, :p].sum(axis=3)
                    dxp[:, :, :, wp - p - 1] += dxp[:, :, :, wp - p :].sum(axis=3)
                dx = dxp[:, :, p : hp - p, p : wp - p]
            else:
                dx = dxp
            _accum(x, dx[0] if squeeze else dx)

    out_t = _make(out, parents, bw, "conv2d")
    if squeeze and out_t.data.ndim == 4:
        return getitem(out_t, 0) if out_t.requires_grad else Tensor(out_t.data[0])
    return out_t


def depthwise_conv2d(x, weight, bias=None):
    """Per-channel 3x3 (or KxK) convolution, spatial-preserving.

    ``weight`` is (C, K, K): one kernel per channel.
    """
    x, weight = _wrap(x), _wrap(weight)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    n, c, h, w = xd.shape
    cw, kh, kw = weight.shape
    if cw != c or kh != kw or kh % 2 == 0:
        raise ShapeError(f"depthwise weight {weight.shape} incompatible with input {x.shape}")
    k = kh
    p = (k - 1) // 2
    xp = _pad_spatial(xd, (p, p), "zeros")
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N,C,H,W,K,K)
    out = np.einsum("nchwij,cij->nchw", win, weight.data, optimize=True)
    parents = [x, weight]
    if bias is not None:
        bias = _wrap(bias)
        out = out + bias.data[:, None, None]
        parents.append(bias)

    def bw(g):
        if weight.requires_grad:
            _accum(weight, np.einsum("nchwij,nchw->cij", win, g, optimize=True))
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i : i + h, j : j + w] += g * weight.data[:, i, j][:, None, None]
            dx = dxp[:, :, p : p + h, p : p + w] if p else dxp
            _accum(x, dx[0] if squeeze else dx)

    out_t = _make(out, parents, bw, "depthwise_conv2d")
    if squeeze and out_t.data.ndim == 4:
        return getitem(out_t, 0) if out_t.requires_grad else Tensor(out_t.data[0])
    return out_t


def conv3d(x, weight, bias=None, padding=None):
    """3-D cross-correlation over (C, T, H, W) input with (C_out, C_in, Kt, K, K) weight.

    Default padding preserves T, H and W.
    """
    x, weight = _wrap(x), _wrap(weight)
    if x.ndim != 4 or weight.ndim != 5:
        raise ShapeError(f"conv3d expects 4-D input and 5-D weight, got {x.shape}, {weight.shape}")
    c_in, t, h, w = x.shape
    c_out, c_in_w, kt, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv3d channel mismatch: input has {c_in}, weight expects {c_in_w}")
    if kt % 2 == 0 or kh % 2 == 0 or kh != kw:
        raise ShapeError(f"conv3d kernel extents must be odd and spatially square, got {(kt, kh, kw)}")
    pt, p = ((kt - 1) // 2, (kh - 1) // 2) if padding is None else (padding, padding)
    xp = np.pad(x.data, ((0, 0), (pt, pt), (p, p), (p, p)))
    to = xp.shape[1] - kt + 1
    ho = xp.shape[2] - kh + 1
    wo = xp.shape[3] - kw + 1
    win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))  # (C,To,Ho,Wo,Kt,K,K)
    cols = win.transpose(1, 2, 3, 0, 4, 5, 6).reshape(to * ho * wo, c_in * kt * kh * kw)
    wmat = weight.data.reshape(c_out, -1)
    out = (cols @ wmat.T).reshape(to, ho, wo, c_out).transpose(3, 0, 1, 2)
    out = np.ascontiguousarray(out)
    parents = [x, weight]
    if bias is not None:
        bias = _wrap(bias)
        out = out + bias.data[:, None, None, None]
        parents.append(bias)

    def bw(g):
        gmat = g.transpose(1, 2, 3, 0).reshape(to * ho * wo, c_out)
        if weight.requires_grad:
            _accum(weight, (gmat.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(1, 2, 3)))
        if x.requires_grad:
            dcols = (gmat @ wmat).reshape(to, ho, wo, c_in, kt, kh, kw)
            dxp = np.zeros_like(xp)
            for a in range(kt):
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, a : a + to, i : i + ho, j : j + wo] += dcols[:, :, :, :, a, i, j].transpose(3, 0, 1, 2)
            _accum(x, dxp[:, pt : pt + t, p : p + h, p : p + w])

    return _make(out, parents, bw, "conv3d")


# -- sampling and resizing --------------------------------------------------------


def grid_sample_multi(feat, coords):
    """Bilinear sampling of a batch of features at multiple coordinate sets.

    ``feat`` is (B, C, H, W); ``coords`` is (B, T, 2, H, W) holding absolute
    source positions (x, y) in pixels.  Returns (B, T, C, H, W).  Samples
    outside the image use border replication; the coordinate gradient is
    zero in the clamped region.
    """
    feat, coords = _wrap(feat), _wrap(coords)
    if feat.ndim != 4 or coords.ndim != 5 or coords.shape[2] != 2:
        raise ShapeError(f"grid_sample_multi expects (B,C,H,W) and (B,T,2,H,W), got {feat.shape}, {coords.shape}")
    b, c, h, w = feat.shape
    if coords.shape[0] != b:
        raise ShapeError(f"coords {coords.shape} incompatible with feature {feat.shape}")
    t, ho, wo = coords.shape[1], coords.shape[3], coords.shape[4]
    cx = coords.data[:, :, 0]
    cy = coords.data[:, :, 1]
    inx = (cx > 0.0) & (cx < w - 1)
    iny = (cy > 0.0) & (cy < h - 1)
    cxc = np.clip(cx, 0.0, w - 1)
    cyc = np.clip(cy, 0.0, h - 1)
    x0 = np.floor(cxc).astype(np.intp)
    y0 = np.floor(cyc).astype(np.intp)
    x0 = np.minimum(x0, w - 2) if w > 1 else x0
    y0 = np.minimum(y0, h - 2) if h > 1 else y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (cxc - x0).astype(feat.dtype)
    fy = (cyc - y0).astype(feat.dtype)

    # gather via flat indexing: feat (B,C,H,W) -> (B,C,H*W)
    flat = feat.data.reshape(b, c, h * w)
    i00 = (y0 * w + x0).reshape(b, -1)
    i01 = (y0 * w + x1).reshape(b, -1)
    i10 = (y1 * w + x0).reshape(b, -1)
    i11 = (y1 * w + x1).reshape(b, -1)
    g00 = np.take_along_axis(flat, i00[:, None, :], axis=2).reshape(b, c, t, ho, wo)
    g01 = np.take_along_axis(flat, i01[:, None, :], axis=2).reshape(b, c, t, ho, wo)
    g10 = np.take_along_axis(flat, i10[:, None, :], axis=2).reshape(b, c, t, ho, wo)
    g11 = np.take_along_axis(flat, i11[:, None, :], axis=2).reshape(b, c, t, ho, wo)
    fxk = fx[:, None]  # (B,1,T,H,W)
    fyk = fy[:, None]
    out = (
        g00 * (1 - fxk) * (1 - fyk)
        + g01 * fxk * (1 - fyk)
        + g10 * (1 - fxk) * fyk
        + g11 * fxk * fyk
    ).transpose(0, 2, 1, 3, 4)  # (B,T,C,H,W)
    out = np.ascontiguousarray(out)

    def bw(g):
        gk = g.transpose(0, 2, 1, 3, 4)  # (B,C,T,H,W)
        if feat.requires_grad:
            hw = h * w
            w00 = ((1 - fxk) * (1 - fyk) * gk).reshape(b, c, -1)
            w01 = (fxk * (1 - fyk) * gk).reshape(b, c, -1)
            w10 = ((1 - fxk) * fyk * gk).reshape(b, c, -1)
            w11 = (fxk * fyk * gk).reshape(b, c, -1)
            base = ((np.arange(b)[:, None] * c + np.arange(c)[None, :]) * hw)[:, :, None]
            gidx = np.concatenate([(base + idx[:, None, :]).ravel() for idx in (i00, i01, i10, i11)])
            vals = np.concatenate([w00.ravel(), w01.ravel(), w10.ravel(), w11.ravel()])
            dflat = np.bincount(gidx, weights=vals, minlength=b * c * hw)
            _accum(feat, dflat.reshape(feat.shape).astype(feat.dtype, copy=False))
        if coords.requires_grad:
            dx = ((1 - fyk) * (g01 - g00) + fyk * (g11 - g10)) * gk
            dy = ((1 - fxk) * (g10 - g00) + fxk * (g11 - g01)) * gk
            dcx = dx.sum(axis=1) * inx
            dcy = dy.sum(axis=1) * iny
            _accum(coords, np.stack([dcx, dcy], axis=2))

    return _make(out, (feat, coords), bw, "grid_sample")


def bilinear_sample(feat, coords):
    """Bilinear interpolation of (C,H,W) features at absolute (2,H,W) pixel coords.

    ``coords[0]`` holds x (column) positions, ``coords[1]`` y (row) positions.
    """
    feat, coords = _wrap(feat), _wrap(coords)
    if feat.ndim != 3 or coords.ndim != 3 or coords.shape[0] != 2:
        raise ShapeError(f"bilinear_sample expects (C,H,W) feature and (2,H,W) coords, got {feat.shape}, {coords.shape}")
    out = grid_sample_multi(reshape(feat, (1,) + feat.shape), reshape(coords, (1, 1) + coords.shape))
    return reshape(out, out.shape[2:])


_resize_cache = {}


def _resize_matrix(n_in, n_out, dtype):
    """Dense interpolation matrix for align-corners-false bilinear resizing."""
    key = (n_in, n_out, np.dtype(dtype).str)
    mat = _resize_cache.get(key)
    if mat is None:
        scale = n_in / n_out
        pos = (np.arange(n_out) + 0.5) * scale - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        lo = np.minimum(lo, max(n_in - 2, 0))
        hi = np.minimum(lo + 1, n_in - 1)
        f = pos - lo
        mat = np.zeros((n_out, n_in), dtype=dtype)
        mat[np.arange(n_out), lo] += 1 - f
        mat[np.arange(n_out), hi] += f
        _resize_cache[key] = mat
    return mat


def resize_bilinear(x, out_h, out_w):
    """Bilinear resizing (align_corners=False) of (..., H, W) tensors."""
    x = _wrap(x)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize target must be >=1, got {(out_h, out_w)}")
    h, w = x.shape[-2], x.shape[-1]
    if (h, w) == (out_h, out_w):
        return x
    ah = _resize_matrix(h, out_h, x.dtype)
    aw = _resize_matrix(w, out_w, x.dtype)
    lead = x.shape[:-2]
    xd = x.data.reshape(-1, h, w)
    out = np.einsum("oh,nhw,pw->nop", ah, xd, aw, optimize=True).reshape(lead + (out_h, out_w))

    def bw(g):
        gd = g.reshape(-1, out_h, out_w)
        dx = np.einsum("oh,nop,pw->nhw", ah, gd, aw, optimize=True).reshape(x.shape)
        _accum(x, dx)

    return _make(out, (x,), bw, "resize_bilinear")


# -- gradient checking ---------------------------------------------------------


def grad_check(fn, inputs, step=1e-4, rng=None, max_entries=24, atol=1e-5):
    """Max relative error between analytic and central finite-difference gradients.

    ``fn`` maps the given float64 Tensors to an output Tensor; the check
    scalarizes via a fixed random projection.  For large inputs, a random
    subset of at most ``max_entries`` coordinates per tensor is probed.
    Relative error is |analytic - numeric| / max(|analytic|, |numeric|, atol);
    ``atol`` floors the denominator so that entries whose true gradient sits
    below the finite-difference cancellation noise (~eps * |loss| / step)
    cannot dominate the result.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    inputs = [t if isinstance(t, Tensor) else Tensor(np.asarray(t, dtype=np.float64)) for t in inputs]
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
    out = fn(*inputs)
    proj = rng.standard_normal(out.shape)
    loss = sum_(mul(out, Tensor(proj)))
    for t in inputs:
        t.zero_grad()
    loss.backward()
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat_idx = np.arange(t.size)
        if t.size > max_entries:
            flat_idx = rng.choice(t.size, size=max_entries, replace=False)
        for fi in flat_idx:
            idx = np.unravel_index(fi, t.shape) if t.shape else ()
            orig = t.data[idx] if t.shape else t.data.item()
            t.data[idx] = orig + step
            with no_grad():
                up = float((fn(*inputs).data * proj).sum())
            t.data[idx] = orig - step
            with no_grad():
                dn = float((fn(*inputs).data * proj).sum())
            t.data[idx] = orig
            numeric = (up - dn) / (2 * step)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), atol)
            worst = max(worst, err)
    return worst
