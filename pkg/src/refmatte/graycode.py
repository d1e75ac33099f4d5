"""Gray-code environment matting.

Structured-light recovery of the refractive flow map: display a stack of
stripe patterns on the background plane, observe each through the transparent
object, and per pixel decode which background pixel the refracted ray landed
on. Serves as an independent cross-check of the ray-traced flow.

Patterns encode the background x and y coordinates in reflected binary Gray
code (adjacent columns differ in one bit), bracketed by all-white and
all-black reference frames used for per-pixel thresholding. Capture uses
nearest-pixel sampling so decoded codes are exact integers; the decoded flow
therefore matches the continuous flow to within half a pixel per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Pose, TriangleMesh
from .render import RenderConfig, RfaMaps, render_rfa


def gray_encode(value):
    """Reflected binary Gray code of a nonnegative integer (or array)."""
    v = np.asarray(value)
    return v ^ (v >> 1)


def gray_decode(code):
    """Inverse of gray_encode, via prefix-XOR folding."""
    g = np.array(code, copy=True)
    shift = 1
    # int64 payloads here never exceed 32 meaningful bits
    while shift < 32:
        g ^= g >> shift
        shift <<= 1
    return g


def _bit_count(extent: int) -> int:
    return 0 if extent <= 1 else math.ceil(math.log2(extent))


@dataclass(frozen=True)
class GrayCodePatternSet:
    """Ordered calibration frames: white, black, x bit planes, y bit planes.

    Bit planes are most-significant first; pattern count is
    bits_x + bits_y + 2. Frames are float64 (H, W) images with values 0 or 1.
    """

    patterns: tuple
    width: int
    height: int
    bits_x: int
    bits_y: int

    @property
    def white(self) -> np.ndarray:
        return self.patterns[0]

    @property
    def black(self) -> np.ndarray:
        return self.patterns[1]

    @property
    def x_planes(self) -> tuple:
        return self.patterns[2:2 + self.bits_x]

    @property
    def y_planes(self) -> tuple:
        return self.patterns[2 + self.bits_x:]

    def __len__(self) -> int:
        return len(self.patterns)


def generate_patterns(width: int, height: int) -> GrayCodePatternSet:
    """Build the Gray-code frame stack for a width x height background."""
    if width < 1 or height < 1:
        raise ValueError("pattern size must be >= 1 on both axes")
    bx = _bit_count(width)
    by = _bit_count(height)
    frames = [np.ones((height, width), dtype=np.float64),
              np.zeros((height, width), dtype=np.float64)]
    gx = gray_encode(np.arange(width, dtype=np.int64))
    for b in range(bx):
        bit = (gx >> (bx - 1 - b)) & 1
        frames.append(np.broadcast_to(bit.astype(np.float64),
                                      (height, width)).copy())
    gy = gray_encode(np.arange(height, dtype=np.int64))
    for b in range(by):
        bit = ((gy >> (by - 1 - b)) & 1).astype(np.float64)
        frames.append(np.repeat(bit[:, None], width, axis=1))
    return GrayCodePatternSet(patterns=tuple(frames), width=width,
                              height=height, bits_x=bx, bits_y=by)


def capture_from_maps(patterns: GrayCodePatternSet, maps: RfaMaps) -> list:
    """Observe each pattern through a precomputed matte.

    Masked pixels sample the pattern at the nearest pixel to
    (pixel + flow), scaled by rho; refracted targets outside the pattern read
    as black. Unmasked pixels see the pattern directly.
    """
    h, w = maps.mask.shape
    if (patterns.width, patterns.height) != (w, h):
        raise ValueError("pattern size does not match the matte")
    ys, xs = np.mgrid[0:h, 0:w]
    tx = np.rint(xs + maps.flow[..., 0]).astype(np.int64)
    ty = np.rint(ys + maps.flow[..., 1]).astype(np.int64)
    inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    m = maps.mask == 1
    grab = m & inside
    gx, gy = tx[grab], ty[grab]
    out = []
    for pat in patterns.patterns:
        obs = np.where(m, 0.0, pat)
        obs[grab] = pat[gy, gx] * maps.rho[grab]
        out.append(obs)
    return out


def capture_through_object(patterns: GrayCodePatternSet, mesh: TriangleMesh,
                           pose: Pose, intr: CameraIntrinsics,
                           cfg: RenderConfig) -> list:
    """Render the matte for the scene, then observe every pattern through it."""
    maps = render_rfa(mesh, pose, intr, cfg)
    return capture_from_maps(patterns, maps)


@dataclass
class DecodedFlow:
    """Decode result: integer-valued flow plus a per-pixel validity flag.

    Invalid pixels (contrast below threshold, or a code outside the pattern)
    carry zero flow and are never silently counted as measurements.
    """

    flow: np.ndarray
    valid: np.ndarray
    mask: np.ndarray

    @property
    def invalid_in_mask(self) -> int:
        return int(np.count_nonzero((self.mask == 1) & (self.valid == 0)))


def decode_flow(observations, patterns: GrayCodePatternSet,
                mask: np.ndarray, min_contrast: float = 0.1) -> DecodedFlow:
    """Decode observed frames into an integer flow map.

    Each bit plane is thresholded against the per-pixel (white + black) / 2
    reference; pixels whose white/black contrast falls below ``min_contrast``
    are flagged invalid (a TIR pixel transmits nothing and decodes to
    nothing).
    """
    if len(observations) != len(patterns):
        raise ValueError("observation count does not match the pattern set")
    h, w = patterns.height, patterns.width
    white = np.asarray(observations[0], dtype=np.float64)
    black = np.asarray(observations[1], dtype=np.float64)
    contrast = white - black
    valid = contrast >= min_contrast
    thresh = 0.5 * (white + black)

    def decode_axis(frames, bits, extent):
        code = np.zeros((h, w), dtype=np.int64)
        for b in range(bits):
            bit = np.asarray(frames[b], dtype=np.float64) > thresh
            code |= bit.astype(np.int64) << (bits - 1 - b)
        coord = gray_decode(code)
        return coord, coord < extent

    dx, okx = decode_axis(observations[2:2 + patterns.bits_x],
                          patterns.bits_x, w)
    dy, oky = decode_axis(observations[2 + patterns.bits_x:],
                          patterns.bits_y, h)
    valid = valid & okx & oky
    ys, xs = np.mgrid[0:h, 0:w]
    flow = np.zeros((h, w, 2), dtype=np.float64)
    flow[..., 0] = np.where(valid, dx - xs, 0.0)
    flow[..., 1] = np.where(valid, dy - ys, 0.0)
    return DecodedFlow(flow=flow, valid=valid.astype(np.uint8),
                       mask=np.asarray(mask, dtype=np.uint8))
