"""Flow-guided deformable alignment: oracles, reductions, gradients."""

import numpy as np
import pytest

from deinterlace import autodiff as ad
from deinterlace import fgda
from deinterlace.errors import ShapeError
from conftest import kink_safe_weights

CFG = fgda.DcnConfig(kernel=3, groups=2, dim=8)


def _weights(rng, cfg=CFG, **kw):
    return kink_safe_weights(fgda.fgda_param_shapes(cfg), rng, **kw)


def test_config_validation():
    with pytest.raises(ShapeError):
        fgda.DcnConfig(kernel=4)
    with pytest.raises(ShapeError):
        fgda.DcnConfig(dim=10, groups=4)


def test_channel_counts():
    assert CFG.offset_channels == 2 * 9 * 2
    assert CFG.mask_channels == 9 * 2


@pytest.mark.parametrize("seed", range(5))
def test_zero_offset_head_gives_tiled_flow(seed):
    """With Conv^O zeroed, offsets equal the flow tiled per tap/group."""
    rng = np.random.default_rng(seed)
    w = _weights(rng)
    for k in ("off_w", "off_b"):
        w[k] = ad.Tensor(np.zeros(w[k].shape))
    f_cur = ad.Tensor(rng.normal(0, 1, (8, 6, 5)))
    f_warp = ad.Tensor(rng.normal(0, 1, (8, 6, 5)))
    flow = rng.normal(0, 1, (2, 6, 5))
    offsets, masks = fgda.compute_offsets_masks(f_cur, f_warp, flow, w, CFG)
    tiled = np.tile(flow, (CFG.taps * CFG.groups, 1, 1))
    np.testing.assert_allclose(offsets.data, tiled, atol=1e-12)


def test_zero_mask_head_gives_half_masks(rng):
    w = _weights(rng)
    for k in ("mask_w", "mask_b"):
        w[k] = ad.Tensor(np.zeros(w[k].shape))
    f = ad.Tensor(rng.normal(0, 1, (8, 6, 5)))
    _, masks = fgda.compute_offsets_masks(f, f, np.zeros((2, 6, 5)), w, CFG)
    np.testing.assert_allclose(masks.data, 0.5, atol=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_dcn_reduces_to_conv_oracle(seed):
    """Zero offsets + unit masks + one group = plain conv2d (replicate pad)."""
    rng = np.random.default_rng(seed)
    cfg = fgda.DcnConfig(kernel=3, groups=1, dim=4)
    feat = rng.normal(0, 1, (4, 7, 6))
    kernel = rng.normal(0, 1, (4, 4, 3, 3))
    bias = rng.normal(0, 1, (4,))
    offsets = np.zeros((cfg.offset_channels, 7, 6))
    masks = np.ones((cfg.mask_channels, 7, 6))
    out = fgda.dcn_forward(feat, offsets, masks, cfg, ad.Tensor(kernel), ad.Tensor(bias))
    ref = ad.conv2d(ad.Tensor(feat), ad.Tensor(kernel), ad.Tensor(bias), padding_mode="replicate")
    np.testing.assert_allclose(out.data, ref.data, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_fgda_align_gradients(seed):
    rng = np.random.default_rng(seed)
    w = _weights(rng)
    names = sorted(w)
    f_adj = ad.Tensor(rng.normal(0, 1, (1, 8, 6, 5)))
    f_cur = ad.Tensor(rng.normal(0, 1, (1, 8, 6, 5)))
    flows = ad.Tensor(rng.integers(-1, 2, (1, 2, 6, 5)).astype(np.float64) + 0.25)

    def f(*ts):
        return fgda.align_batch(f_adj, f_cur, flows, dict(zip(names, ts)), CFG)

    err = ad.grad_check(f, [w[k] for k in names], rng=rng, max_entries=6)
    assert err < 1e-4


def test_batched_equals_single(rng):
    w = _weights(rng)
    feats = [rng.normal(0, 1, (8, 6, 5)) for _ in range(3)]
    curs = [rng.normal(0, 1, (8, 6, 5)) for _ in range(3)]
    flows = [rng.normal(0, 0.5, (2, 6, 5)) for _ in range(3)]
    batch = fgda.align_batch(
        ad.Tensor(np.stack(feats)), ad.Tensor(np.stack(curs)), ad.Tensor(np.stack(flows)), w, CFG
    )
    for i in range(3):
        single = fgda.fgda_align(ad.Tensor(feats[i]), ad.Tensor(curs[i]), flows[i], w, CFG)
        np.testing.assert_allclose(batch.data[i], single.data, atol=1e-12)


def test_shape_validation(rng):
    w = _weights(rng)
    with pytest.raises(ShapeError):
        fgda.fgda_align(
            ad.Tensor(rng.normal(0, 1, (8, 6, 5))),
            ad.Tensor(rng.normal(0, 1, (8, 6, 4))),
            np.zeros((2, 6, 5)),
            w,
            CFG,
        )
    with pytest.raises(ShapeError):
        fgda.fgda_align(
            ad.Tensor(rng.normal(0, 1, (8, 6, 5))),
            ad.Tensor(rng.normal(0, 1, (8, 6, 5))),
            np.zeros((2, 4, 4)),
            w,
            CFG,
        )
