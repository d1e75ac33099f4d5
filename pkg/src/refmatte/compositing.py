"""Matte compositing onto arbitrary backgrounds.

Per pixel: out = (1 - mask) * bg + mask * rho * bg(pixel + flow), i.e. the
background shows through untouched outside the object and is sampled at the
refracted point, scaled by the attenuation, inside it. Images are linear
intensities in [0, 1]; rho is scalar and multiplies all channels (colorless
glass).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .render import RfaMaps


@dataclass
class Image:
    """Floating-point image, (H, W, C) with C in {1, 3}, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or p.shape[2] not in (1, 3):
            raise ValueError("image must be (H, W) or (H, W, C) with C in {1, 3}")
        if not np.all(np.isfinite(p)):
            raise ValueError("image contains non-finite values")
        self.pixels = p

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @staticmethod
    def constant(width: int, height: int, color) -> "Image":
        c = np.atleast_1d(np.asarray(color, dtype=np.float64))
        return Image(np.broadcast_to(c, (height, width, c.size)).copy())


def _bilinear(pixels: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Clamp-to-border bilinear sampling at continuous (x, y)."""
    h, w = pixels.shape[:2]
    xf = np.clip(x, 0.0, w - 1.0)
    yf = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(xf).astype(np.int64)
    y0 = np.floor(yf).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xf - x0)[..., None]
    fy = (yf - y0)[..., None]
    top = (1.0 - fx) * pixels[y0, x0] + fx * pixels[y0, x1]
    bot = (1.0 - fx) * pixels[y1, x0] + fx * pixels[y1, x1]
    return (1.0 - fy) * top + fy * bot


def sample_background(bg: Image, pixel, flow) -> np.ndarray:
    """Background color at pixel + flow (bilinear, clamped at the border).

    Accepts a single (x, y) pair or arrays of them; returns color(s) with the
    background's channel count.
    """
    px = np.asarray(pixel, dtype=np.float64)
    fl = np.asarray(flow, dtype=np.float64)
    x = px[..., 0] + fl[..., 0]
    y = px[..., 1] + fl[..., 1]
    vals = _bilinear(bg.pixels, np.atleast_1d(x), np.atleast_1d(y))
    return vals[0] if px.ndim == 1 else vals


def composite(rfa: RfaMaps, bg: Image) -> Image:
    """Place the matte onto a background of the same resolution.

    Outside the mask the background passes through bit-exactly. Inside, the
    background is sampled at pixel + flow and scaled by rho.
    """
    if (bg.width, bg.height) != (rfa.width, rfa.height):
        raise ValueError(
            f"background {bg.width}x{bg.height} does not match matte "
            f"{rfa.width}x{rfa.height}; rescale the background first")
    h, w = rfa.mask.shape
    ys, xs = np.mgrid[0:h, 0:w]
    refr = _bilinear(bg.pixels, xs + rfa.flow[..., 0], ys + rfa.flow[..., 1])
    out = np.where((rfa.mask == 1)[..., None],
                   rfa.rho[..., None] * refr, bg.pixels)
    return Image(out)
