"""Shared fixtures and helpers for the test suite.

Gradient checks compare against central finite differences, which break
down at non-differentiable points (leaky-ReLU at zero, bilinear sampling
at integer coordinates).  The helpers here construct "kink-safe" test
points: biases pushed well away from zero, small conv weights so
preactivations stay bias-dominated, tiny offset/mask heads so deformable
sampling coordinates stay near half-integer flow positions.
"""

import numpy as np
import pytest

from deinterlace import autodiff as ad
from deinterlace.flow import FlowField, FlowPyramid, level_shapes


def kink_safe_weights(shapes, rng, weight_scale=0.005, requires_grad=True):
    """Random weights positioned away from activation/sampling kinks.

    Offset-head biases sit near +-0.5 so deformable sampling coordinates
    stay half a pixel from integers even at zero-flow boundary timesteps;
    combined with quarter-integer test flows, every coordinate keeps at
    least ~0.2 px of distance from a bilinear kink.
    """
    out = {}
    for name, shape in shapes.items():
        if name.endswith(("off_w", "mask_w", "mask_b")):
            data = rng.normal(0, 1e-3, shape)
        elif name.endswith("off_b"):
            data = rng.choice([-1.0, 1.0], shape) * rng.uniform(0.45, 0.55, shape)
        elif name.endswith("_b"):
            data = rng.choice([-1.0, 1.0], shape) * rng.uniform(0.4, 0.6, shape)
        else:
            data = rng.normal(0, weight_scale, shape)
        out[name] = ad.Tensor(data, requires_grad=requires_grad)
    return out


def fractional_flow(rng, h, w, max_shift=1):
    """Flow with fractional part 0.25 everywhere (clear of bilinear kinks
    both alone and combined with the +-0.5 offset biases above)."""
    return FlowField(rng.integers(-max_shift, max_shift + 1, (2, h, w)).astype(np.float64) + 0.25)


def fractional_pyramid(rng, h, w, max_shift=1):
    return FlowPyramid(
        tuple(fractional_flow(rng, lh, lw, max_shift) for lh, lw in level_shapes(h, w))
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
