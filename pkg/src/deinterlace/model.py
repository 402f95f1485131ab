"""End-to-end deinterlacing network assembly and weight files.

Pipeline: multi-scale image-space alignment of each field against its
neighbors (27 input channels), 3-D convolutional feature extraction,
FARP propagation, and 3-D convolutional reconstruction.  Residual skips
exist in both latent space (extracted features added to FARP output) and
image space (input field added to the prediction), so an all-zero model
is exactly the identity on its input fields.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import farp as farp_mod
from . import flow as flow_mod
from .errors import ConfigError, FormatError, ParityError, ShapeError
from .fields import Field

NUM_FIELDS = farp_mod.NUM_FIELDS
ALIGN_CHANNELS = 27  # 1 original + 2 directions x 4 scales, x 3 color channels

WEIGHTS_MAGIC = b"DWTS"
WEIGHTS_VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


@dataclass(frozen=True)
class ModelConfig:
    """Network variant plus the four ablation switches."""

    variant: str = "small"
    image_alignment: bool = True
    bidirectional: bool = True
    fgda: bool = True
    snaf: bool = True

    def __post_init__(self):
        if self.variant not in ("small", "large"):
            raise ConfigError(f"variant must be 'small' or 'large', got {self.variant!r}")

    @property
    def farp(self):
        maker = farp_mod.FarpConfig.small if self.variant == "small" else farp_mod.FarpConfig.large
        return maker(bidirectional=self.bidirectional, use_fgda=self.fgda, use_snaf=self.snaf)

    @property
    def dim(self):
        return self.farp.blocks[0].dim

    @property
    def input_channels(self):
        return ALIGN_CHANNELS if self.image_alignment else 3

    def digest(self):
        """Short stable fingerprint of the architecture implied by this config."""
        text = repr(sorted(model_param_shapes(self).items())).encode()
        return hashlib.sha256(text).hexdigest()[:16]


def model_param_shapes(cfg):
    """Every learnable parameter name and shape of the assembled model."""
    d = cfg.dim
    shapes = {
        "feat_w": (d, cfg.input_channels, 3, 3, 3),
        "feat_b": (d,),
        "rec_w": (3, d, 3, 3, 3),
        "rec_b": (3,),
    }
    for name, shape in farp_mod.farp_param_shapes(cfg.farp).items():
        shapes[f"farp_{name}"] = shape
    return shapes


def parameter_count(cfg):
    return sum(int(np.prod(s)) for s in model_param_shapes(cfg).values())


def init_weights(cfg, seed=0, dtype=np.float32):
    """Deterministic fan-in-scaled uniform initialization.

    Biases and the offset/mask prediction heads start at zero, so initial
    deformable sampling follows the optical flow exactly (zero residue,
    masks at sigmoid(0) = 0.5).
    """
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in model_param_shapes(cfg).items():
        zero = (
            len(shape) == 1
            or name.endswith("_b")
            or name.endswith("off_w")
            or name.endswith("mask_w")
        )
        if zero:
            data = np.zeros(shape, dtype=dtype)
        else:
            bound = 1.0 / np.sqrt(np.prod(shape[1:]))
            data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        weights[name] = ad.Tensor(data, requires_grad=True)
    return weights


def zero_weights(cfg, dtype=np.float64):
    return {
        name: ad.Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)
        for name, shape in model_param_shapes(cfg).items()
    }


def _field_images(fields, dtype):
    """Validate a 6-field window and return its images as one (6,3,h,w) array."""
    if len(fields) != NUM_FIELDS:
        raise ShapeError(f"model consumes {NUM_FIELDS} fields, got {len(fields)}")
    shape = fields[0].pixels.shape
    for i, f in enumerate(fields):
        if f.pixels.shape != shape:
            raise ShapeError(f"field {i} shape {f.pixels.shape} differs from {shape}")
        if i > 0 and f.parity is fields[i - 1].parity:
            raise ParityError(f"fields {i - 1} and {i} share parity {f.parity}; parities must alternate")
    return np.stack([f.pixels.transpose(2, 0, 1).astype(dtype) for f in fields])


def estimate_window_flows(fields):
    """The ten directed flow pyramids of one window (both neighbors per timestep)."""
    flows_to_prev = [None] + [
        flow_mod.estimate_pyramid_flow(fields[i], fields[i - 1]) for i in range(1, NUM_FIELDS)
    ]
    flows_to_next = [
        flow_mod.estimate_pyramid_flow(fields[i], fields[i + 1]) for i in range(NUM_FIELDS - 1)
    ] + [None]
    return flows_to_prev, flows_to_next


def _warp_multiscale(neighbor, pyramid, h, w):
    """Warp a (3,h,w) neighbor image toward the current field at all four scales.

    The neighbor is downsampled to each pyramid scale, warped by that
    scale's flow, and resized back; a missing neighbor (None pyramid)
    replicates the current field instead, handled by the caller.
    """
    out = []
    for lvl in pyramid.levels:
        lh, lw = lvl.height, lvl.width
        small = ad.resize_bilinear(ad.Tensor(neighbor), lh, lw)
        warped = flow_mod.warp(small, lvl)
        out.append(ad.resize_bilinear(warped, h, w).data)
    return out


def image_align(fields, flows_to_prev, flows_to_next, dtype=np.float64):
    """Multi-scale image-space alignment: (6, 27, h, w) network input.

    Per timestep: the original field, then the previous field warped at
    the four pyramid scales, then the next field likewise.  Boundary
    timesteps replicate the field itself for the missing neighbor.
    """
    images = _field_images(fields, dtype)
    n, _, h, w = images.shape
    out = np.empty((n, ALIGN_CHANNELS, h, w), dtype=dtype)
    with ad.no_grad():
        for i in range(n):
            slots = [images[i]]
            for neighbor, pyr in (
                (images[i - 1] if i > 0 else None, flows_to_prev[i]),
                (images[i + 1] if i < n - 1 else None, flows_to_next[i]),
            ):
                if neighbor is None or pyr is None:
                    slots.extend([images[i]] * flow_mod.NUM_LEVELS)
                else:
                    slots.extend(_warp_multiscale(neighbor, pyr, h, w))
            out[i] = np.concatenate(slots, axis=0)
    return out


def forward(fields, cfg, weights, flows=None):
    """Full network pass: 6 input fields to 6 complementary-parity fields.

    ``flows`` is an optional precomputed ``(flows_to_prev, flows_to_next)``
    pair of FlowPyramid lists; omitted, it is estimated from the fields.
    Returns ``(predicted_fields, prediction_tensor)`` where the tensor is
    the differentiable (6, 3, h, w) output for training.
    """
    dtype = weights["feat_w"].dtype
    images = _field_images(fields, dtype)
    n, _, h, w = images.shape
    if flows is None:
        flows = estimate_window_flows(fields)
    flows_to_prev, flows_to_next = flows

    if cfg.image_alignment:
        net_in = image_align(fields, flows_to_prev, flows_to_next, dtype)
    else:
        net_in = images
    x = ad.Tensor(np.ascontiguousarray(net_in.transpose(1, 0, 2, 3)))  # (C, 6, h, w)

    g = ad.leaky_relu(ad.conv3d(x, weights["feat_w"], weights["feat_b"]), 0.1)
    g_t = ad.transpose(g, (1, 0, 2, 3))  # (6, dim, h, w)

    farp_w = {k[len("farp_") :]: v for k, v in weights.items() if k.startswith("farp_")}
    y = farp_mod.farp_forward(g_t, flows_to_prev, flows_to_next, cfg.farp, farp_w)
    y = ad.add(y, g_t)  # latent-space skip

    rec = ad.conv3d(ad.transpose(y, (1, 0, 2, 3)), weights["rec_w"], weights["rec_b"])
    pred = ad.add(ad.transpose(rec, (1, 0, 2, 3)), ad.Tensor(images))  # image-space skip

    out_fields = tuple(
        Field(
            np.ascontiguousarray(pred.data[i].transpose(1, 2, 0)),
            fields[i].parity.complement,
            fields[i].source_frame_index,
        )
        for i in range(n)
    )
    return out_fields, pred


# -- weight serialization ------------------------------------------------------


def save_weights(path, weights, cfg):
    """Binary weight file: magic, version, config digest, named tensor records."""
    digest = cfg.digest().encode()
    chunks = [WEIGHTS_MAGIC, struct.pack("<HH", WEIGHTS_VERSION, len(digest)), digest]
    chunks.append(struct.pack("<I", len(weights)))
    for name in sorted(weights):
        t = weights[name]
        data = t.data if isinstance(t, ad.Tensor) else np.asarray(t)
        code = 0 if data.dtype == np.float32 else 1
        payload = data.astype(_DTYPE_CODES[code]).tobytes()
        enc = name.encode()
        chunks.append(struct.pack("<H", len(enc)))
        chunks.append(enc)
        chunks.append(struct.pack("<BB", code, data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(payload)
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_weights(path, cfg, requires_grad=True):
    """Load a weight file, validating every record against the config."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: not a weight file (bad magic)")
    version, dlen = struct.unpack("<HH", raw[4:8])
    if version != WEIGHTS_VERSION:
        raise FormatError(f"{path}: unsupported weight format version {version}")
    offset = 8 + dlen
    if offset + 4 > len(raw):
        raise FormatError(f"{path}: truncated header")
    (count,) = struct.unpack("<I", raw[offset : offset + 4])
    offset += 4

    expected = model_param_shapes(cfg)
    weights = {}
    for _ in range(count):
        if offset + 2 > len(raw):
            raise FormatError(f"{path}: truncated record header")
        (nlen,) = struct.unpack("<H", raw[offset : offset + 2])
        offset += 2
        name = raw[offset : offset + nlen].decode()
        offset += nlen
        code, rank = struct.unpack("<BB", raw[offset : offset + 2])
        offset += 2
        if code not in _DTYPE_CODES:
            raise FormatError(f"{path}: unknown dtype code {code} for tensor {name!r}")
        shape = struct.unpack(f"<{rank}I", raw[offset : offset + 4 * rank])
        offset += 4 * rank
        dtype = _DTYPE_CODES[code]
        nbytes = int(np.prod(shape)) * dtype.itemsize
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated payload for tensor {name!r}")
        if name not in expected:
            raise FormatError(f"{path}: unknown tensor name {name!r} for this config")
        if shape != expected[name]:
            raise ShapeError(f"{path}: tensor {name!r} has shape {shape}, config expects {expected[name]}")
        data = np.frombuffer(raw[offset : offset + nbytes], dtype=dtype).reshape(shape)
        offset += nbytes
        weights[name] = ad.Tensor(data.copy(), requires_grad=requires_grad)
    missing = sorted(set(expected) - set(weights))
    if missing:
        raise FormatError(f"{path}: missing tensors {missing[:3]}{'...' if len(missing) > 3 else ''}")
    return weights
