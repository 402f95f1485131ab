"""Synthetic progressive test sequences: smooth textures under translation.

Each sequence is a large band-limited random texture (Gaussian-smoothed
noise) viewed through a window that translates at a constant subpixel
velocity, optionally with a second texture layer moving independently.
Smoothness (sigma around 2) keeps the motion recoverable by the flow
estimator; determinism comes from the seed.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ShapeError
from .fields import Frame


def _texture(rng, h, w, sigma):
    tex = rng.random((h, w, 3))
    for c in range(3):
        tex[..., c] = ndimage.gaussian_filter(tex[..., c], sigma)
    lo, hi = tex.min(), tex.max()
    return (tex - lo) / (hi - lo) if hi > lo else tex


def make_sequence(num_frames, height, width, seed=0, max_speed=1.5, texture_sigma=2.0, layers=1):
    """Generate ``num_frames`` progressive frames of translating texture."""
    if height % 2 != 0:
        raise ShapeError(f"frame height must be even, got {height}")
    if num_frames < 1:
        raise ShapeError(f"need at least one frame, got {num_frames}")
    rng = np.random.default_rng(seed)
    margin = int(np.ceil(max_speed * num_frames)) + 4
    frames = []
    planes = []
    for k in range(max(1, layers)):
        tex = _texture(rng, height + 2 * margin, width + 2 * margin, texture_sigma)
        speed = rng.uniform(0.3, max_speed)
        angle = rng.uniform(0, 2 * np.pi)
        vel = np.array([speed * np.sin(angle), speed * np.cos(angle)])  # (dy, dx)
        planes.append((tex, vel))
    gy, gx = np.mgrid[0:height, 0:width].astype(np.float64)
    for t in range(num_frames):
        acc = np.zeros((height, width, 3))
        for k, (tex, vel) in enumerate(planes):
            oy = margin + vel[0] * t
            ox = margin + vel[1] * t
            coords = np.stack([gy + oy, gx + ox])
            for c in range(3):
                acc[..., c] += ndimage.map_coordinates(tex[..., c], coords, order=1, mode="nearest")
        acc /= max(1, layers)
        frames.append(Frame(np.clip(acc, 0.0, 1.0)))
    return frames
