"""Supervised training: L1 loss, AdamW, cosine-annealed learning rate.

Desk-scale defaults (5K iterations, batch 2, 64x64 frame patches)
replace the full-scale recipe (600K/8/128), which remains selectable.
Flow pyramids are estimated per crop and cached, since the non-learned
estimator dominates sample-preparation cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import model as model_mod
from .errors import NumericalError, ParityError, ShapeError
from .fields import Field, TrainingSample, make_training_sample


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 1e-4
    final_lr: float = 1e-7
    total_iters: int = 5000
    batch: int = 2
    patch_h: int = 64  # frame rows; fields see patch_h // 2
    patch_w: int = 64
    weight_decay: float = 1e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 1000
    crop_grid: int = 8  # crop origins snap to this grid so flow caching pays off

    def __post_init__(self):
        if self.final_lr >= self.base_lr:
            raise ShapeError("final_lr must be below base_lr")
        if self.patch_h % 2 != 0:
            raise ShapeError(f"patch height must be even, got {self.patch_h}")


def lr_at(iteration, cfg):
    """Single-cycle cosine annealing from base_lr down to final_lr."""
    if not 0 <= iteration <= cfg.total_iters:
        raise ShapeError(f"iteration {iteration} outside [0, {cfg.total_iters}]")
    t = iteration / cfg.total_iters
    return cfg.final_lr + 0.5 * (cfg.base_lr - cfg.final_lr) * (1 + math.cos(math.pi * t))


def _target_array(target_fields, dtype):
    return np.stack([f.pixels.transpose(2, 0, 1).astype(dtype) for f in target_fields])


def l1_loss(pred, targets, pred_parities=None):
    """Mean absolute error between 6 predictions and 6 target fields.

    ``pred`` is either the differentiable (6,3,h,w) model output tensor
    or a tuple of predicted Fields; target parities must match.
    """
    if isinstance(pred, tuple) or isinstance(pred, list):
        for i, (p, t) in enumerate(zip(pred, targets)):
            if p.parity is not t.parity:
                raise ParityError(f"timestep {i}: prediction parity {p.parity} != target {t.parity}")
        pred = ad.Tensor(_target_array(pred, pred[0].pixels.dtype))
    tgt = _target_array(targets, pred.dtype)
    if tuple(pred.shape) != tgt.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {tgt.shape}")
    return ad.mean(ad.abs_(ad.add(pred, ad.Tensor(-tgt))))


def sample_patch(sample, patch_h, patch_w, rng, grid=1):
    """Deterministic spatially consistent crop of all 12 fields.

    The crop is chosen in frame coordinates (even y origin) so weaving
    the cropped fields equals cropping the woven frame; origins snap to
    ``grid`` multiples.  Returns (cropped sample, (y0, x0)).
    """
    rows, width = sample.inputs[0].rows, sample.inputs[0].width
    frame_h = rows * 2
    if patch_h > frame_h or patch_w > width:
        raise ShapeError(f"patch {(patch_h, patch_w)} exceeds frame {(frame_h, width)}")
    gy = max(grid, 2)
    y0 = int(rng.integers(0, (frame_h - patch_h) // gy + 1)) * gy
    y0 -= y0 % 2
    x0 = int(rng.integers(0, (width - patch_w) // grid + 1)) * grid

    def crop(f):
        return Field(f.pixels[y0 // 2 : (y0 + patch_h) // 2, x0 : x0 + patch_w], f.parity, f.source_frame_index)

    cropped = TrainingSample(tuple(crop(f) for f in sample.inputs), tuple(crop(f) for f in sample.targets))
    return cropped, (y0, x0)


def init_optim_state(weights):
    return {
        "step": 0,
        "m": {k: np.zeros_like(t.data) for k, t in weights.items()},
        "v": {k: np.zeros_like(t.data) for k, t in weights.items()},
    }


def optimizer_step(weights, state, lr, cfg):
    """One AdamW update from the gradients stored on the weight tensors."""
    for k, t in weights.items():
        g = t.grad
        if g is None:
            g = np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter {k!r}; step aborted")
    state["step"] += 1
    s = state["step"]
    bc1 = 1 - cfg.beta1**s
    bc2 = 1 - cfg.beta2**s
    for k, t in weights.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        m = state["m"][k]
        v = state["v"][k]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        t.data *= 1.0 - lr * cfg.weight_decay  # decoupled decay
        t.data -= (lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)).astype(t.dtype)


def save_optim_state(path, state):
    arrays = {"step": np.array(state["step"])}
    for k, a in state["m"].items():
        arrays[f"m::{k}"] = a
    for k, a in state["v"].items():
        arrays[f"v::{k}"] = a
    np.savez(path, **arrays)


def load_optim_state(path):
    with np.load(path) as z:
        state = {"step": int(z["step"]), "m": {}, "v": {}}
        for k in z.files:
            if k.startswith("m::"):
                state["m"][k[3:]] = z[k]
            elif k.startswith("v::"):
                state["v"][k[3:]] = z[k]
    return state


def _window_index(sequences):
    return [(si, ws) for si, frames in enumerate(sequences) for ws in range(len(frames) - 5)]


def train_loop(sequences, model_cfg, train_cfg, out_dir, log=None, weights=None):
    """Desk-scale training over in-memory frame sequences.

    Writes periodic checkpoints (weights + optimizer state) and a loss
    curve ("iter loss lr" per line) under ``out_dir``; returns the final
    weights and the curve.  A non-finite loss aborts with the last
    checkpoint retained on disk.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    windows = _window_index(sequences)
    if not windows:
        raise ShapeError("training corpus has no 6-frame window")
    rng = np.random.default_rng(train_cfg.seed)
    if weights is None:
        weights = model_mod.init_weights(model_cfg, train_cfg.seed, dtype=np.float32)
    state = init_optim_state(weights)
    flow_cache = {}
    curve = []
    curve_path = out_dir / "loss_curve.txt"

    def checkpoint(tag):
        model_mod.save_weights(out_dir / f"weights_{tag}.bin", weights, model_cfg)
        save_optim_state(out_dir / f"optim_{tag}.npz", state)

    with curve_path.open("w") as curve_fh:
        for it in range(train_cfg.total_iters):
            lr = lr_at(it, train_cfg)
            for t in weights.values():
                t.zero_grad()
            total = 0.0
            for _ in range(train_cfg.batch):
                si, ws = windows[int(rng.integers(len(windows)))]
                sample = make_training_sample(sequences[si][ws : ws + 6])
                cropped, origin = sample_patch(
                    sample, train_cfg.patch_h, train_cfg.patch_w, rng, train_cfg.crop_grid
                )
                key = (si, ws, origin)
                flows = flow_cache.get(key)
                if flows is None:
                    flows = model_mod.estimate_window_flows(cropped.inputs)
                    flow_cache[key] = flows
                _, pred = model_mod.forward(cropped.inputs, model_cfg, weights, flows)
                loss = l1_loss(pred, cropped.targets)
                loss.backward()
                total += float(loss.data)
            avg = total / train_cfg.batch
            if not math.isfinite(avg):
                checkpoint("abort")
                raise NumericalError(f"non-finite loss {avg} at iteration {it}")
            for t in weights.values():
                if t.grad is not None:
                    t.grad /= train_cfg.batch
            optimizer_step(weights, state, lr, train_cfg)
            curve.append((it, avg, lr))
            curve_fh.write(f"{it} {avg:.8f} {lr:.3e}\n")
            if log is not None and (it % 100 == 0 or it == train_cfg.total_iters - 1):
                log(f"iter {it} loss {avg:.6f} lr {lr:.3e}")
            if (it + 1) % train_cfg.checkpoint_every == 0:
                checkpoint(f"{it + 1:06d}")
    checkpoint("final")
    return weights, curve
