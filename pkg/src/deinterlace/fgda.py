"""Flow-guided deformable alignment.

Offsets for the deformable convolution are predicted as residues on top
of optical flow: a shared convolutional trunk consumes the current
feature, the flow-warped adjacent feature, and the flow itself; two heads
emit per-tap offsets (added to the tiled flow) and sigmoid modulation
masks.  The deformable convolution then samples the *unwarped* adjacent
feature at flow-plus-residue positions, scales each tap by its mask, and
mixes taps with an ordinary kernel.

The public operations work on single (C,H,W) features; batched variants
(leading timestep axis) exist so a refinement block can push all six
timesteps through each convolution at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .flow import FlowField

_ZERO_FLOW_CACHE = {}


@dataclass(frozen=True)
class DcnConfig:
    kernel: int = 3
    groups: int = 4
    dim: int = 20

    def __post_init__(self):
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ShapeError(f"DCN kernel must be odd, got {self.kernel}")
        if self.dim % self.groups != 0:
            raise ShapeError(f"dim {self.dim} not divisible by {self.groups} deformable groups")

    @property
    def taps(self):
        return self.kernel * self.kernel

    @property
    def offset_channels(self):
        return 2 * self.taps * self.groups

    @property
    def mask_channels(self):
        return self.taps * self.groups


def fgda_param_shapes(cfg):
    """Parameter names and shapes of one FGDA module (shared trunk, two heads, DCN)."""
    d = cfg.dim
    return {
        "trunk0_w": (d, 2 * d + 2, 3, 3),
        "trunk0_b": (d,),
        "trunk1_w": (d, d, 3, 3),
        "trunk1_b": (d,),
        "trunk2_w": (d, d, 3, 3),
        "trunk2_b": (d,),
        "off_w": (cfg.offset_channels, d, 3, 3),
        "off_b": (cfg.offset_channels,),
        "mask_w": (cfg.mask_channels, d, 3, 3),
        "mask_b": (cfg.mask_channels,),
        "dcn_w": (d, d, cfg.kernel, cfg.kernel),
        "dcn_b": (d,),
    }


def _as_flow_tensor(flow, dtype):
    if isinstance(flow, FlowField):
        flow = flow.vectors
    t = flow if isinstance(flow, ad.Tensor) else ad.Tensor(np.asarray(flow))
    if t.dtype != dtype:
        t = t.astype(dtype)
    return t


def _batch_warp(feat, flows):
    """Backward warp of (N,C,H,W) features by per-sample (N,2,H,W) flows."""
    n, c, h, w = feat.shape
    gy, gx = np.mgrid[0:h, 0:w].astype(feat.dtype.type)
    grid = np.stack([gx, gy])[None, None]  # (1,1,2,H,W)
    coords = ad.add(ad.reshape(flows, (n, 1, 2, h, w)), ad.Tensor(grid))
    out = ad.grid_sample_multi(feat, coords)  # (N,1,C,H,W)
    return ad.reshape(out, (n, c, h, w))


def offsets_masks_batch(f_cur, f_warped, flows, weights, cfg):
    """Batched offset/mask prediction; leading axis is the timestep batch."""
    d = cfg.dim
    n, c, h, w = f_cur.shape
    if c != d or f_warped.shape != f_cur.shape:
        raise ShapeError(f"FGDA expects {d}-channel features, got {f_cur.shape} and {f_warped.shape}")
    if flows.shape != (n, 2, h, w):
        raise ShapeError(f"flow batch {flows.shape} incompatible with features {f_cur.shape}")
    x = ad.concat([f_cur, f_warped, flows], axis=1)
    if x.shape[1] != 2 * d + 2:
        raise ShapeError(f"trunk input must have {2 * d + 2} channels, got {x.shape[1]}")
    hdn = ad.leaky_relu(ad.conv2d(x, weights["trunk0_w"], weights["trunk0_b"]), 0.1)
    hdn = ad.leaky_relu(ad.conv2d(hdn, weights["trunk1_w"], weights["trunk1_b"]), 0.1)
    hdn = ad.leaky_relu(ad.conv2d(hdn, weights["trunk2_w"], weights["trunk2_b"]), 0.1)
    residue = ad.conv2d(hdn, weights["off_w"], weights["off_b"])
    tiled = ad.Tensor(np.tile(flows.data, (1, cfg.taps * cfg.groups, 1, 1)))
    offsets = ad.add(tiled, residue)
    masks = ad.sigmoid(ad.conv2d(hdn, weights["mask_w"], weights["mask_b"]))
    return offsets, masks


def dcn_batch(feature, offsets, masks, cfg, kernel_w, kernel_b=None):
    """Batched modulated deformable convolution over (N,C,H,W) features."""
    n, c, h, w = feature.shape
    k, g, t = cfg.kernel, cfg.groups, cfg.taps
    if c % g != 0:
        raise ShapeError(f"feature channels {c} not divisible by {g} groups")
    if offsets.shape != (n, 2 * t * g, h, w):
        raise ShapeError(f"offsets shape {offsets.shape} != {(n, 2 * t * g, h, w)}")
    if masks.shape != (n, t * g, h, w):
        raise ShapeError(f"masks shape {masks.shape} != {(n, t * g, h, w)}")
    if kernel_w.shape[1] != c or kernel_w.shape[2:] != (k, k):
        raise ShapeError(f"DCN kernel shape {kernel_w.shape} incompatible with {c} channels, K={k}")
    cg = c // g

    half = (k - 1) / 2.0
    gy, gx = np.mgrid[0:h, 0:w].astype(feature.dtype.type)
    taps_dx = np.array([kj - half for ki in range(k) for kj in range(k)], dtype=feature.dtype)
    taps_dy = np.array([ki - half for ki in range(k) for kj in range(k)], dtype=feature.dtype)
    base = np.empty((1, t, 2, h, w), dtype=feature.dtype)
    base[0, :, 0] = gx[None] + taps_dx[:, None, None]
    base[0, :, 1] = gy[None] + taps_dy[:, None, None]

    coords = ad.add(ad.reshape(offsets, (n * g, t, 2, h, w)), ad.Tensor(base))
    feat_g = ad.reshape(feature, (n * g, cg, h, w))
    sampled = ad.grid_sample_multi(feat_g, coords)  # (N*G, T, Cg, H, W)
    modulated = ad.mul(sampled, ad.reshape(masks, (n * g, t, 1, h, w)))
    per_sample = ad.reshape(modulated, (n, g, t, cg, h, w))
    stacked = ad.reshape(ad.transpose(per_sample, (0, 2, 1, 3, 4, 5)), (n, t * c, h, w))

    w1 = ad.reshape(ad.transpose(kernel_w, (0, 2, 3, 1)), (kernel_w.shape[0], t * c, 1, 1))
    return ad.conv2d(stacked, w1, kernel_b)


def align_batch(f_adj, f_cur, flows, weights, cfg):
    """Batched FGDA: warp, predict offsets/masks, deformably convolve the unwarped feature."""
    if f_adj.shape != f_cur.shape:
        raise ShapeError(f"adjacent/current features differ: {f_adj.shape} vs {f_cur.shape}")
    f_tilde = _batch_warp(f_adj, flows)
    offsets, masks = offsets_masks_batch(f_cur, f_tilde, flows, weights, cfg)
    return dcn_batch(f_adj, offsets, masks, cfg, weights["dcn_w"], weights["dcn_b"])


# -- single-feature surface ------------------------------------------------------


def _unsqueeze(t):
    return ad.reshape(t, (1,) + tuple(t.shape))


def compute_offsets_masks(f_cur, f_warped, flow, weights, cfg):
    """Predict DCN offsets (tiled flow + residue) and modulation masks.

    ``f_cur`` and ``f_warped`` are (dim,H,W) tensors; ``flow`` the matching
    (2,H,W) flow.  Returns (offsets, masks) with 2*K^2*G and K^2*G channels.
    """
    f_cur = f_cur if isinstance(f_cur, ad.Tensor) else ad.Tensor(f_cur)
    f_warped = f_warped if isinstance(f_warped, ad.Tensor) else ad.Tensor(f_warped)
    flow_t = _as_flow_tensor(flow, f_cur.dtype)
    if flow_t.shape[1:] != f_cur.shape[1:]:
        raise ShapeError("FGDA inputs must share resolution")
    o, m = offsets_masks_batch(_unsqueeze(f_cur), _unsqueeze(f_warped), _unsqueeze(flow_t), weights, cfg)
    return ad.reshape(o, o.shape[1:]), ad.reshape(m, m.shape[1:])


def dcn_forward(feature, offsets, masks, cfg, kernel_w, kernel_b=None):
    """Modulated deformable convolution of a (C,H,W) feature.

    Offset channels are laid out (group, tap, dx/dy); each tap samples the
    group's channel slab at base + offset by bilinear interpolation with
    border replication, is scaled by its mask, and taps combine through
    ``kernel_w`` (C_out, C, K, K).
    """
    feature = feature if isinstance(feature, ad.Tensor) else ad.Tensor(feature)
    offsets = offsets if isinstance(offsets, ad.Tensor) else ad.Tensor(offsets)
    masks = masks if isinstance(masks, ad.Tensor) else ad.Tensor(masks)
    out = dcn_batch(_unsqueeze(feature), _unsqueeze(offsets), _unsqueeze(masks), cfg, kernel_w, kernel_b)
    return ad.reshape(out, out.shape[1:])


def fgda_align(f_adj, f_cur, flow, weights, cfg):
    """Align an adjacent timestep's feature to the current one.

    ``flow`` maps current-field pixels to the adjacent field.  The warped
    adjacent feature guides offset/mask prediction; the DCN then samples
    the unwarped adjacent feature.
    """
    f_adj = f_adj if isinstance(f_adj, ad.Tensor) else ad.Tensor(f_adj)
    f_cur = f_cur if isinstance(f_cur, ad.Tensor) else ad.Tensor(f_cur)
    flow_t = _as_flow_tensor(flow, f_cur.dtype)
    if f_adj.shape != f_cur.shape:
        raise ShapeError(f"adjacent/current features differ: {f_adj.shape} vs {f_cur.shape}")
    if flow_t.shape[1:] != tuple(f_cur.shape[1:]):
        raise ShapeError(f"flow resolution {flow_t.shape[1:]} != feature resolution {tuple(f_cur.shape[1:])}")
    out = align_batch(_unsqueeze(f_adj), _unsqueeze(f_cur), _unsqueeze(flow_t), weights, cfg)
    return ad.reshape(out, out.shape[1:])
