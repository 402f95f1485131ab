"""Coarse-to-fine optical flow between fields, warping, and flow files.

The estimator is a classical pyramidal Lucas-Kanade scheme producing one
flow field per dyadic scale (1, 1/2, 1/4, 1/8 of field resolution).  It
is deliberately non-learned and excluded from gradient flow; the warp
operation, by contrast, is differentiable in both its arguments.

Flow convention: ``estimate_pyramid_flow(src, dst)`` returns, for each
pixel p of ``src``, the displacement (dx, dy) to the matching position in
``dst``.  Warping ``dst`` back onto ``src`` therefore samples ``dst`` at
p + flow(p).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import autodiff as ad
from .errors import FormatError, ShapeError
from .fields import Field

NUM_LEVELS = 4
_LUMA = np.array([0.299, 0.587, 0.114])

FLOW_MAGIC = b"DFLW"
FLOW_VERSION = 1


@dataclass(frozen=True)
class FlowField:
    """Per-pixel motion vectors (dx, dy) in pixels at one resolution."""

    vectors: np.ndarray  # (2, H, W); [0] = dx, [1] = dy

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 3 or v.shape[0] != 2:
            raise ShapeError(f"flow field must be (2,H,W), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ShapeError("flow field contains non-finite values")

    @property
    def height(self):
        return self.vectors.shape[1]

    @property
    def width(self):
        return self.vectors.shape[2]


@dataclass(frozen=True)
class FlowPyramid:
    """Four flow fields at scales 1, 1/2, 1/4, 1/8 of field resolution."""

    levels: tuple

    def __post_init__(self):
        if len(self.levels) != NUM_LEVELS:
            raise ShapeError(f"flow pyramid needs {NUM_LEVELS} levels, got {len(self.levels)}")
        for k in range(NUM_LEVELS - 1):
            h, w = self.levels[k].height, self.levels[k].width
            nh, nw = self.levels[k + 1].height, self.levels[k + 1].width
            if (nh, nw) != (-(-h // 2), -(-w // 2)):
                raise ShapeError(
                    f"level {k + 1} is {nh}x{nw}, expected ceil-half of level {k} ({h}x{w})"
                )


def level_shapes(height, width):
    """Dyadic ceil-halving shape schedule for the four pyramid levels."""
    shapes = [(height, width)]
    for _ in range(NUM_LEVELS - 1):
        h, w = shapes[-1]
        shapes.append((-(-h // 2), -(-w // 2)))
    return shapes


def _to_gray(image):
    if isinstance(image, Field):
        image = image.pixels
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        return image @ _LUMA
    return image


def _downsample(img, shape):
    t = ad.resize_bilinear(ad.Tensor(img[None]), shape[0], shape[1])
    return t.data[0]


def _warp_gray(img, flow):
    h, w = img.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = np.stack([gx + flow[0], gy + flow[1]])
    with ad.no_grad():
        out = ad.bilinear_sample(ad.Tensor(img[None]), ad.Tensor(coords))
    return out.data[0]


def _lk_refine(src, dst, flow, window=15, iterations=12, reg=1e-3, flow_smooth=1.5):
    """Iterative dense Lucas-Kanade update of ``flow`` (src -> dst).

    Each iteration solves the windowed normal equations, clamps the update
    to one pixel, and median/Gaussian-filters the flow for stability in
    low-gradient regions.
    """
    gy_img, gx_img = np.gradient(dst)
    size = window
    for _ in range(iterations):
        warped = _warp_gray(dst, flow)
        ix = _warp_gray(gx_img, flow)
        iy = _warp_gray(gy_img, flow)
        it = warped - src
        a11 = ndimage.uniform_filter(ix * ix, size) + reg
        a12 = ndimage.uniform_filter(ix * iy, size)
        a22 = ndimage.uniform_filter(iy * iy, size) + reg
        b1 = ndimage.uniform_filter(ix * it, size)
        b2 = ndimage.uniform_filter(iy * it, size)
        det = a11 * a22 - a12 * a12
        du = np.clip(-(a22 * b1 - a12 * b2) / det, -1.0, 1.0)
        dv = np.clip(-(a11 * b2 - a12 * b1) / det, -1.0, 1.0)
        flow = flow + np.stack([du, dv])
        flow = np.stack([ndimage.median_filter(flow[0], 3), ndimage.median_filter(flow[1], 3)])
        if flow_smooth > 0:
            flow = np.stack(
                [ndimage.gaussian_filter(flow[0], flow_smooth), ndimage.gaussian_filter(flow[1], flow_smooth)]
            )
    return flow


def estimate_pyramid_flow(src, dst, magnitude_cap=None, window=15, iterations=12):
    """4-scale coarse-to-fine flow from ``src`` to ``dst``.

    Constant (degenerate) image pairs yield zero flow.  Magnitudes are
    clamped to ``magnitude_cap`` (default: image diagonal).
    """
    g_src = _to_gray(src)
    g_dst = _to_gray(dst)
    if g_src.shape != g_dst.shape:
        raise ShapeError(f"flow inputs differ in shape: {g_src.shape} vs {g_dst.shape}")
    h, w = g_src.shape
    cap = float(np.hypot(h, w)) if magnitude_cap is None else float(magnitude_cap)
    shapes = level_shapes(h, w)
    pyr_src = [ndimage.gaussian_filter(g_src, 0.5)]
    pyr_dst = [ndimage.gaussian_filter(g_dst, 0.5)]
    for shape in shapes[1:]:
        pyr_src.append(_downsample(ndimage.gaussian_filter(pyr_src[-1], 0.8), shape))
        pyr_dst.append(_downsample(ndimage.gaussian_filter(pyr_dst[-1], 0.8), shape))

    flow = np.zeros((2,) + shapes[-1], dtype=np.float64)
    levels = [None] * NUM_LEVELS
    for k in range(NUM_LEVELS - 1, -1, -1):
        # skip degenerate levels: constant images carry no signal, and
        # axes shorter than 3 samples cannot support image gradients
        if min(shapes[k]) >= 3 and np.ptp(pyr_src[k]) > 1e-12 and np.ptp(pyr_dst[k]) > 1e-12:
            flow = _lk_refine(pyr_src[k], pyr_dst[k], flow, window, iterations)
        flow = np.clip(flow, -cap, cap)
        levels[k] = FlowField(flow.copy())
        if k > 0:
            up_h, up_w = shapes[k - 1]
            flow = 2.0 * _downsample_flow(flow, up_h, up_w)
    return FlowPyramid(tuple(levels))


def _downsample_flow(flow, out_h, out_w):
    with ad.no_grad():
        return ad.resize_bilinear(ad.Tensor(flow), out_h, out_w).data


def identity_pyramid(height, width):
    """All-zero flow pyramid for a field of the given size."""
    return FlowPyramid(tuple(FlowField(np.zeros((2, h, w))) for h, w in level_shapes(height, width)))


def warp(feature, flow):
    """Backward-sampling warp: output(p) = feature(p + flow(p)).

    ``feature`` is a Tensor (C,H,W); ``flow`` a FlowField, array, or Tensor
    of matching resolution.  Differentiable w.r.t. feature and flow.
    """
    if isinstance(flow, FlowField):
        flow = flow.vectors
    flow_t = flow if isinstance(flow, ad.Tensor) else ad.Tensor(flow)
    feat_t = feature if isinstance(feature, ad.Tensor) else ad.Tensor(feature)
    if feat_t.ndim != 3:
        raise ShapeError(f"warp expects (C,H,W) feature, got {feat_t.shape}")
    c, h, w = feat_t.shape
    if flow_t.shape != (2, h, w):
        raise ShapeError(f"flow {flow_t.shape} does not match feature resolution {(h, w)}")
    gy, gx = np.mgrid[0:h, 0:w].astype(feat_t.dtype.type)
    grid = ad.Tensor(np.stack([gx, gy]))
    coords = ad.add(grid, flow_t.astype(feat_t.dtype) if flow_t.dtype != feat_t.dtype else flow_t)
    return ad.bilinear_sample(feat_t, coords)


def save_flow(path, pyramid):
    """Serialize a pyramid: magic, version, level count, per-level planes (float32 LE)."""
    chunks = [FLOW_MAGIC, struct.pack("<HH", FLOW_VERSION, len(pyramid.levels))]
    for lvl in pyramid.levels:
        chunks.append(struct.pack("<II", lvl.height, lvl.width))
        chunks.append(lvl.vectors[0].astype("<f4").tobytes())
        chunks.append(lvl.vectors[1].astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_flow(path):
    """Load and validate a serialized flow pyramid."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != FLOW_MAGIC:
        raise FormatError(f"{path}: not a flow file (bad magic)")
    version, count = struct.unpack("<HH", raw[4:8])
    if version != FLOW_VERSION:
        raise FormatError(f"{path}: unsupported flow format version {version}")
    if count != NUM_LEVELS:
        raise FormatError(f"{path}: expected {NUM_LEVELS} pyramid levels, found {count}")
    offset = 8
    levels = []
    for k in range(count):
        if offset + 8 > len(raw):
            raise FormatError(f"{path}: truncated at level {k} header")
        h, w = struct.unpack("<II", raw[offset : offset + 8])
        offset += 8
        nbytes = h * w * 4
        if offset + 2 * nbytes > len(raw):
            raise FormatError(f"{path}: truncated at level {k} payload")
        dx = np.frombuffer(raw[offset : offset + nbytes], dtype="<f4").reshape(h, w)
        offset += nbytes
        dy = np.frombuffer(raw[offset : offset + nbytes], dtype="<f4").reshape(h, w)
        offset += nbytes
        levels.append(FlowField(np.stack([dx, dy]).astype(np.float64)))
    return FlowPyramid(tuple(levels))
