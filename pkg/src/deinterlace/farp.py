"""Feature alignment, refinement and propagation.

Seven flow-guided refinement blocks run in sequence over a mirrored
scale schedule [0,1,2,3,2,1,0] (fractions 1, 1/2, 1/4, 1/8 of field
resolution).  Within a block, every timestep is aligned against its two
neighbors' previous-block features (bidirectional parallel propagation),
fused, and refined by a stack of gated residual blocks.  Encoder block
outputs are added to the matching-scale decoder block inputs.

Features are carried as one stacked tensor (6, dim, h, w) so each
convolution processes all six timesteps at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import fgda
from .errors import ConfigError, ShapeError

SCALE_SCHEDULE = (0, 1, 2, 3, 2, 1, 0)
NUM_BLOCKS = 7
NUM_FIELDS = 6


@dataclass(frozen=True)
class FrbConfig:
    dim: int
    num_snaf: int
    scale: int

    def __post_init__(self):
        if self.scale not in (0, 1, 2, 3):
            raise ConfigError(f"scale index must be in 0..3, got {self.scale}")


@dataclass(frozen=True)
class FarpConfig:
    blocks: tuple
    dcn_kernel: int = 3
    dcn_groups: int = 4
    bidirectional: bool = True
    use_fgda: bool = True
    use_snaf: bool = True

    def __post_init__(self):
        if len(self.blocks) != NUM_BLOCKS:
            raise ConfigError(f"FARP needs {NUM_BLOCKS} blocks, got {len(self.blocks)}")
        for b, expected in zip(self.blocks, SCALE_SCHEDULE):
            if b.scale != expected:
                raise ConfigError(f"scale schedule must be {SCALE_SCHEDULE}, got {self.dims}")

    @property
    def dims(self):
        return tuple(b.dim for b in self.blocks)

    def dcn_config(self, dim):
        return fgda.DcnConfig(self.dcn_kernel, self.dcn_groups, dim)

    @staticmethod
    def small(**flags):
        return FarpConfig(tuple(FrbConfig(20, 3, s) for s in SCALE_SCHEDULE), **flags)

    @staticmethod
    def large(**flags):
        dims = (20, 40, 80, 160, 80, 40, 20)
        if dims != tuple(reversed(dims)):
            raise ConfigError("large-variant dims must be mirror-symmetric")
        return FarpConfig(tuple(FrbConfig(d, 6, s) for d, s in zip(dims, SCALE_SCHEDULE)), **flags)


def snaf_param_shapes(dim):
    return {
        "pw1_w": (2 * dim, dim, 1, 1),
        "pw1_b": (2 * dim,),
        "dw_w": (2 * dim, 3, 3),
        "dw_b": (2 * dim,),
        "pw2_w": (dim, dim, 1, 1),
        "pw2_b": (dim,),
    }


def conv_relu_param_shapes(dim):
    return {
        "c1_w": (dim, dim, 3, 3),
        "c1_b": (dim,),
        "c2_w": (dim, dim, 3, 3),
        "c2_b": (dim,),
    }


def farp_param_shapes(cfg):
    """Every FARP parameter name and shape for the given configuration."""
    shapes = {}
    fan_in = 3 if cfg.bidirectional else 2
    for j, blk in enumerate(cfg.blocks):
        d = blk.dim
        if cfg.use_fgda:
            for direction in ("fwd", "bwd") if cfg.bidirectional else ("fwd",):
                for name, shape in fgda.fgda_param_shapes(cfg.dcn_config(d)).items():
                    shapes[f"frb{j}_{direction}_{name}"] = shape
        shapes[f"frb{j}_fb_w"] = (d, fan_in * d, 3, 3)
        shapes[f"frb{j}_fb_b"] = (d,)
        maker = snaf_param_shapes if cfg.use_snaf else conv_relu_param_shapes
        for i in range(blk.num_snaf):
            for name, shape in maker(d).items():
                shapes[f"frb{j}_ref{i}_{name}"] = shape
    for j in range(NUM_BLOCKS - 1):
        shapes[f"trans{j}_w"] = (cfg.blocks[j + 1].dim, cfg.blocks[j].dim, 3, 3)
        shapes[f"trans{j}_b"] = (cfg.blocks[j + 1].dim,)
    return shapes


def _sub(weights, prefix):
    plen = len(prefix)
    return {k[plen:]: v for k, v in weights.items() if k.startswith(prefix)}


def snaf_block(x, weights):
    """Gated residual refinement: pointwise expand, depthwise 3x3, simple
    gate (channel-split product), pointwise project, plus input."""
    dim = x.shape[-3]
    if weights["pw1_w"].shape[1] != dim:
        raise ShapeError(f"snaf block built for dim {weights['pw1_w'].shape[1]}, got {dim} channels")
    h = ad.conv2d(x, weights["pw1_w"], weights["pw1_b"])
    h = ad.depthwise_conv2d(h, weights["dw_w"], weights["dw_b"])
    if h.ndim == 3:
        a, b = h[:dim], h[dim:]
    else:
        a, b = h[:, :dim], h[:, dim:]
    h = ad.mul(a, b)
    h = ad.conv2d(h, weights["pw2_w"], weights["pw2_b"])
    return ad.add(x, h)


def conv_relu_block(x, weights):
    """Plain residual block used by the S-NAF ablation: conv, ReLU, conv, plus input."""
    h = ad.conv2d(x, weights["c1_w"], weights["c1_b"])
    h = ad.relu(h)
    h = ad.conv2d(h, weights["c2_w"], weights["c2_b"])
    return ad.add(x, h)


def fusion_block(x, weights):
    """Aggregate concatenated propagation features: 3*dim -> dim conv + LeakyReLU."""
    c_in = weights["fb_w"].shape[1]
    channels = x.shape[-3]
    if channels != c_in:
        raise ShapeError(f"fusion block expects {c_in} input channels, got {channels}")
    return ad.leaky_relu(ad.conv2d(x, weights["fb_w"], weights["fb_b"]), 0.1)


def _shift_stack(feats, direction):
    """Neighbor features for alignment: direction -1 takes the previous
    timestep (boundary timestep keeps itself), +1 the next."""
    n = feats.shape[0]
    if direction < 0:
        order = [0] + list(range(n - 1))
    else:
        order = list(range(1, n)) + [n - 1]
    return ad.stack([feats[i] for i in order], axis=0)


def _neighbor_flows(flow_fields, n, h, w, dtype):
    """Stack per-timestep flows, substituting zero flow at missing boundaries."""
    out = np.zeros((n, 2, h, w), dtype=dtype)
    for i, f in enumerate(flow_fields):
        if f is None:
            continue
        v = f.vectors if hasattr(f, "vectors") else np.asarray(f)
        if v.shape != (2, h, w):
            raise ShapeError(f"flow level shape {v.shape} does not match feature scale {(h, w)}")
        out[i] = v
    return ad.Tensor(out)


def frb_forward(feats, flows_to_prev, flows_to_next, block_cfg, cfg, weights, prefix):
    """One flow-guided refinement block over stacked (6, dim, h, w) features.

    ``flows_to_prev[i]`` maps timestep i's pixels into timestep i-1 (None at
    i=0); ``flows_to_next[i]`` into i+1 (None at the last timestep).  Every
    aligned feature reads only previous-block features, so all six
    timesteps are computed in parallel.
    """
    n, d, h, w = feats.shape
    if d != block_cfg.dim:
        raise ShapeError(f"block expects dim {block_cfg.dim}, got {d}")
    dcn_cfg = cfg.dcn_config(d)
    parts = [feats]
    if cfg.use_fgda:
        fwd_flows = _neighbor_flows(flows_to_prev, n, h, w, feats.dtype)
        f_fwd = fgda.align_batch(_shift_stack(feats, -1), feats, fwd_flows, _sub(weights, f"{prefix}_fwd_"), dcn_cfg)
        parts.append(f_fwd)
        if cfg.bidirectional:
            bwd_flows = _neighbor_flows(flows_to_next, n, h, w, feats.dtype)
            f_bwd = fgda.align_batch(
                _shift_stack(feats, +1), feats, bwd_flows, _sub(weights, f"{prefix}_bwd_"), dcn_cfg
            )
            parts.append(f_bwd)
    else:
        parts.append(feats)
        if cfg.bidirectional:
            parts.append(feats)
    x = fusion_block(ad.concat(parts, axis=1), _sub(weights, f"{prefix}_"))
    refine = snaf_block if cfg.use_snaf else conv_relu_block
    for i in range(block_cfg.num_snaf):
        x = refine(x, _sub(weights, f"{prefix}_ref{i}_"))
    return x


def farp_forward(feats, flows_to_prev, flows_to_next, cfg, weights):
    """Run the full 7-block propagation stack.

    ``feats`` is the stacked (6, dim0, h, w) feature tensor at field
    resolution; the flow arguments are per-timestep lists of FlowPyramid
    (None at the respective boundary).  Returns (6, dim0, h, w).
    """
    n, d, h, w = feats.shape
    if n != NUM_FIELDS:
        raise ShapeError(f"FARP processes {NUM_FIELDS} timesteps, got {n}")
    if d != cfg.blocks[0].dim:
        raise ShapeError(f"input features must have {cfg.blocks[0].dim} channels, got {d}")

    def level(pyramids, k):
        return [None if p is None else p.levels[k] for p in pyramids]

    skips = {}
    x = feats
    for j, blk in enumerate(cfg.blocks):
        k = blk.scale
        x = frb_forward(x, level(flows_to_prev, k), level(flows_to_next, k), blk, cfg, weights, f"frb{j}")
        mirror = NUM_BLOCKS - 1 - j
        if j < mirror:
            skips[mirror] = x
        if j == NUM_BLOCKS - 1:
            break
        next_blk = cfg.blocks[j + 1]
        tw, tb = weights[f"trans{j}_w"], weights[f"trans{j}_b"]
        if next_blk.scale > k:
            x = ad.conv2d(x, tw, tb, stride=2)
        else:
            target = skips[j + 1].shape[2:]
            x = ad.conv2d(ad.resize_bilinear(x, target[0], target[1]), tw, tb)
        if j + 1 in skips:
            x = ad.add(x, skips[j + 1])
    if x.shape != feats.shape:
        raise ShapeError(f"FARP output shape {x.shape} does not match input {feats.shape}")
    return x
