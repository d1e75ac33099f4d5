import numpy as np
import pytest

from refmatte import Image, RfaMaps, composite, sample_background

from conftest import rng_for


def flat_maps(width, height, flow=(0.0, 0.0), rho=1.0, mask=1):
    return RfaMaps(flow=np.broadcast_to(np.asarray(flow, float), (height, width, 2)).copy(),
                   rho=np.full((height, width), float(rho)),
                   mask=np.full((height, width), mask, dtype=np.uint8))


def test_image_normalization_and_validation():
    gray = Image(np.zeros((4, 6)))
    assert gray.channels == 1 and gray.pixels.shape == (4, 6, 1)
    rgb = Image(np.zeros((4, 6, 3)))
    assert rgb.width == 6 and rgb.height == 4 and rgb.channels == 3
    with pytest.raises(ValueError):
        Image(np.zeros((4, 6, 2)))
    with pytest.raises(ValueError):
        Image(np.full((4, 6), np.nan))
    const = Image.constant(5, 3, (0.2, 0.4, 0.6))
    assert const.pixels.shape == (3, 5, 3)
    np.testing.assert_array_equal(const.pixels[1, 2], [0.2, 0.4, 0.6])


def test_empty_mask_passes_background_through():
    rng = rng_for("passthrough")
    bg = Image(rng.uniform(0.0, 1.0, size=(16, 16, 3)))
    maps = flat_maps(16, 16, mask=0)
    maps.rho[...] = 0.0
    out = composite(maps, bg)
    assert np.array_equal(out.pixels, bg.pixels)  # bitwise, not approx


def test_composite_hand_case():
    # rho 0.5 over a constant 0.8 background: matte pixels read 0.4
    bg = Image.constant(8, 8, (0.8,))
    maps = flat_maps(8, 8, rho=0.5)
    out = composite(maps, bg)
    np.testing.assert_allclose(out.pixels, 0.4, atol=1e-15)


def test_composite_rho_linearity():
    rng = rng_for("rho_linear")
    bg = Image(rng.uniform(0.2, 1.0, size=(12, 12, 3)))
    base = flat_maps(12, 12, flow=(1.0, 0.0), rho=0.3)
    out1 = composite(base, bg).pixels
    base.rho *= 2.0
    out2 = composite(base, bg).pixels
    base.rho *= 1.5  # 0.9 total
    out3 = composite(base, bg).pixels
    np.testing.assert_allclose(out2, out1 * 2.0, atol=1e-12)
    np.testing.assert_allclose(out3, out1 * 3.0, atol=1e-12)


def test_flow_shifts_sampling():
    bg = Image(np.zeros((8, 8)))
    bg.pixels[3, 5, 0] = 1.0
    maps = flat_maps(8, 8, flow=(2.0, 1.0))
    out = composite(maps, bg)
    # pixel (3, 2) reads bg at (3+2, 2+1) wait: flow is (dx, dy)
    assert out.pixels[2, 3, 0] == 1.0  # (x=3+2, y=2+1) hits the lit texel
    assert out.pixels[3, 5, 0] == 0.0


def test_bilinear_midpoint_and_clamp():
    bg = Image(np.zeros((4, 4)))
    bg.pixels[1, 1, 0] = 1.0
    # halfway between (1,1) and (2,1): average 0.5
    val = sample_background(bg, np.array([1.0, 1.0]), np.array([0.5, 0.0]))
    assert val[0] == pytest.approx(0.5, abs=1e-12)
    # clamp-to-border beyond the edge
    edge = sample_background(bg, np.array([3.0, 1.0]), np.array([10.0, 0.0]))
    corner = bg.pixels[1, 3, 0]
    assert edge[0] == pytest.approx(corner, abs=1e-15)


def test_sample_background_array_form():
    rng = rng_for("sample_arr")
    bg = Image(rng.uniform(size=(6, 6, 3)))
    pix = np.array([[1.0, 2.0], [3.0, 0.0]])
    flow = np.zeros((2, 2))
    vals = sample_background(bg, pix, flow)
    np.testing.assert_allclose(vals[0], bg.pixels[2, 1], atol=1e-15)
    np.testing.assert_allclose(vals[1], bg.pixels[0, 3], atol=1e-15)


def test_composite_resolution_mismatch():
    bg = Image.constant(8, 8, (1.0,))
    maps = flat_maps(16, 16)
    with pytest.raises(ValueError):
        composite(maps, bg)


def test_composite_outside_mask_untouched():
    rng = rng_for("outside")
    bg = Image(rng.uniform(size=(10, 10, 3)))
    maps = flat_maps(10, 10, rho=0.7)
    maps.mask[:5] = 0
    maps.rho[:5] = 0.0
    maps.flow[:5] = 0.0
    out = composite(maps, bg)
    assert np.array_equal(out.pixels[:5], bg.pixels[:5])
    assert not np.allclose(out.pixels[5:], bg.pixels[5:])
