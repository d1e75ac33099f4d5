import numpy as np
import pytest

from refmatte import (Pose, RenderConfig, RfaMaps, capture_from_maps,
                      capture_through_object, decode_flow, generate_patterns,
                      render_rfa, rotation_from_rotvec)
from refmatte.graycode import gray_decode, gray_encode
from refmatte.primitives import make_icosphere, make_slab


def identity_maps(width, height):
    return RfaMaps(flow=np.zeros((height, width, 2)),
                   rho=np.ones((height, width)),
                   mask=np.ones((height, width), dtype=np.uint8))


def test_gray_code_bijection_and_adjacency():
    codes = [gray_encode(v) for v in range(512)]
    assert len(set(codes)) == 512
    for v, c in enumerate(codes):
        assert gray_decode(c) == v
    # neighboring values differ in exactly one bit
    for a, b in zip(codes, codes[1:]):
        assert bin(a ^ b).count("1") == 1


def test_pattern_set_layout():
    p = generate_patterns(64, 32)
    assert p.bits_x == 6 and p.bits_y == 5
    assert len(p) == p.bits_x + p.bits_y + 2
    assert np.all(p.white == 1.0) and np.all(p.black == 0.0)
    assert len(p.x_planes) == 6 and len(p.y_planes) == 5
    for plane in p.x_planes:
        assert plane.shape == (32, 64)
        assert set(np.unique(plane)) <= {0.0, 1.0}
        # x planes are constant down columns
        assert np.all(plane == plane[0:1, :])
    # the stack of x planes spells each column index in Gray code, MSB first
    for x in range(64):
        bits = [int(plane[0, x]) for plane in p.x_planes]
        code = 0
        for b in bits:
            code = (code << 1) | b
        assert gray_decode(code) == x


def test_pattern_degenerate_extent():
    p = generate_patterns(1, 8)
    assert p.bits_x == 0 and p.bits_y == 3
    assert len(p) == 5


def test_identity_decode_is_exact():
    patterns = generate_patterns(32, 24)
    maps = identity_maps(32, 24)
    obs = capture_from_maps(patterns, maps)
    decoded = decode_flow(obs, patterns, maps.mask)
    assert np.all(decoded.valid == 1)
    assert np.all(decoded.flow == 0.0)
    assert decoded.invalid_in_mask == 0


def test_decode_recovers_integer_shift():
    patterns = generate_patterns(32, 24)
    maps = identity_maps(32, 24)
    maps.flow[...] = [3.0, -2.0]
    obs = capture_from_maps(patterns, maps)
    decoded = decode_flow(obs, patterns, maps.mask)
    inside = decoded.valid == 1
    assert inside.sum() > 300  # border pixels shift outside and go invalid
    np.testing.assert_array_equal(decoded.flow[inside],
                                  np.broadcast_to([3.0, -2.0], (inside.sum(), 2)))


def test_attenuation_scales_contrast():
    patterns = generate_patterns(16, 16)
    maps = identity_maps(16, 16)
    maps.rho[...] = 0.5
    obs = capture_from_maps(patterns, maps)
    np.testing.assert_allclose(obs[0], 0.5)  # white frame attenuated
    decoded = decode_flow(obs, patterns, maps.mask)
    assert np.all(decoded.valid == 1)  # contrast 0.5 still decodes
    maps.rho[...] = 0.05
    decoded_dim = decode_flow(capture_from_maps(patterns, maps), patterns, maps.mask)
    assert np.all(decoded_dim.valid == 0)  # below the 0.1 contrast floor
    assert np.all(decoded_dim.flow == 0.0)
    assert decoded_dim.invalid_in_mask == 16 * 16


def test_out_of_bounds_flow_is_invalid():
    patterns = generate_patterns(16, 16)
    maps = identity_maps(16, 16)
    maps.flow[...] = [100.0, 0.0]  # refracted ray leaves the pattern
    obs = capture_from_maps(patterns, maps)
    assert all(np.all(frame == 0.0) for frame in obs)  # sees black everywhere
    decoded = decode_flow(obs, patterns, maps.mask)
    assert np.all(decoded.valid == 0)


def test_unmasked_pixels_see_pattern_directly():
    patterns = generate_patterns(16, 16)
    maps = identity_maps(16, 16)
    maps.mask[:8] = 0
    maps.flow[:8] = 0.0
    maps.rho[:8] = 0.0
    obs = capture_from_maps(patterns, maps)
    np.testing.assert_array_equal(obs[0][:8], patterns.white[:8])
    decoded = decode_flow(obs, patterns, maps.mask)
    # background pixels view the pattern straight on: valid, zero flow
    assert np.all(decoded.valid[:8] == 1)
    assert np.all(decoded.flow[:8] == 0.0)
    assert np.array_equal(decoded.mask, maps.mask)


def test_slab_cross_oracle(intr_mid):
    # matting and ray tracing are independent routes to the same flow
    cfg = RenderConfig(ior=1.5, plane_depth=0.6)
    slab = make_slab(0.4, 0.4, 0.02)
    pose = Pose(rotation_from_rotvec(np.array([0.0, 0.35, 0.0])),
                np.array([0.0, 0.0, 0.3]))
    maps = render_rfa(slab, pose, intr_mid, cfg)
    patterns = generate_patterns(intr_mid.width, intr_mid.height)
    obs = capture_through_object(patterns, slab, pose, intr_mid, cfg)
    decoded = decode_flow(obs, patterns, maps.mask)
    inside = decoded.valid == 1
    assert inside.sum() > 0.9 * maps.mask.sum()
    err = np.abs(decoded.flow[inside] - maps.flow[inside])
    assert err.max() < 1.0  # nearest-pixel capture quantizes at 0.5 px/axis


def test_sphere_cross_oracle_and_tir(sphere, pose_front, intr_small):
    cfg = RenderConfig(ior=1.5, plane_depth=0.8)
    maps = render_rfa(sphere, pose_front, intr_small, cfg)
    patterns = generate_patterns(intr_small.width, intr_small.height)
    obs = capture_through_object(patterns, sphere, pose_front, intr_small, cfg)
    decoded = decode_flow(obs, patterns, maps.mask)
    inside = (decoded.valid == 1) & (maps.mask == 1)
    # TIR rim pixels transmit nothing -> no contrast -> invalid
    assert np.all(maps.rho[inside] > 0)
    dark = (maps.mask == 1) & (maps.rho == 0)
    assert np.all(decoded.valid[dark] == 0)
    # rim rays refract clear off the pattern and also go invalid, so valid
    # coverage stays below the rho >= 0.1 count; accuracy on what decodes
    # is the contract
    assert inside.sum() > 500
    err = np.abs(decoded.flow[inside] - maps.flow[inside])
    frac_ok = np.mean(np.all(err <= 1.0, axis=1))
    assert frac_ok >= 0.99


def test_decode_resolution_mismatch():
    patterns = generate_patterns(16, 16)
    maps = identity_maps(8, 8)
    with pytest.raises(ValueError):
        capture_from_maps(patterns, maps)
