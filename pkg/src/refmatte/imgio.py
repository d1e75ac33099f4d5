"""Bit-exact file formats: PFM float maps, PNG masks and images, JSON.

PFM layout: 'Pf' (one channel) or 'PF' (three channels), ASCII width/height
line, scale line whose sign encodes endianness (always written -1.0 =
little-endian float32), then rows bottom-to-top. Flow maps are written as a
single 3-channel PFM with a zero third channel; scalar maps as 1-channel.

PNG images hold linear intensities: 8-bit values map to float via exact
division by 255 on read and round(value * 255) on write; no gamma is applied
anywhere. Masks use {0, 255}; region label images store the label byte
directly (region count must stay <= 255).
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from PIL import Image as PILImage


def write_pfm(path, data: np.ndarray) -> None:
    """Write a (H, W) or (H, W, 3) float array as little-endian PFM."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 2:
        header = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError("PFM supports (H, W) or (H, W, 3) arrays")
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(a).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file back to float32, top-to-bottom row order."""
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: bad magic {header!r}")
        dims = f.readline().split()
        if len(dims) != 2:
            raise ValueError("malformed PFM size line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        raw = f.read(w * h * channels * 4)
    a = np.frombuffer(raw, dtype=dtype).reshape(h, w, channels)
    a = np.flipud(a).astype(np.float32)
    return a[:, :, 0] if channels == 1 else a


def write_flow_pfm(path, flow: np.ndarray) -> None:
    """Flow (H, W, 2) goes out as 3-channel PFM with a zero third channel."""
    h, w = flow.shape[:2]
    out = np.zeros((h, w, 3), dtype=np.float32)
    out[:, :, :2] = flow
    write_pfm(path, out)


def read_flow_pfm(path) -> np.ndarray:
    a = read_pfm(path)
    if a.ndim != 3:
        raise ValueError("flow PFM must have 3 channels")
    return a[:, :, :2].astype(np.float64)


def write_mask_png(path, mask: np.ndarray) -> None:
    PILImage.fromarray((np.asarray(mask) != 0).astype(np.uint8) * 255,
                       mode="L").save(path)


def read_mask_png(path) -> np.ndarray:
    a = np.asarray(PILImage.open(path).convert("L"))
    return (a >= 128).astype(np.uint8)


def write_labels_png(path, labels: np.ndarray) -> None:
    lab = np.asarray(labels)
    if lab.max(initial=0) > 255:
        raise ValueError("more than 255 region labels cannot go into 8-bit PNG")
    PILImage.fromarray(lab.astype(np.uint8), mode="L").save(path)


def read_labels_png(path) -> np.ndarray:
    return np.asarray(PILImage.open(path).convert("L")).astype(np.int32)


def write_image_png(path, pixels: np.ndarray) -> None:
    """Linear [0,1] float image to 8-bit PNG (grayscale or RGB)."""
    p = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    if p.ndim == 3 and p.shape[2] == 1:
        p = p[:, :, 0]
    b = np.rint(p * 255.0).astype(np.uint8)
    mode = "L" if b.ndim == 2 else "RGB"
    PILImage.fromarray(b, mode=mode).save(path)


def read_image_png(path) -> np.ndarray:
    """8-bit PNG to linear float64 in [0,1]; RGB stays 3-channel."""
    img = PILImage.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if "A" in img.mode or len(img.getbands()) > 1
                          else "L")
    a = np.asarray(img).astype(np.float64) / 255.0
    return a


def save_json(path, obj) -> None:
    """Canonical JSON: sorted keys, 2-space indent, trailing newline."""
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_json(path):
    with open(path) as f:
        return json.load(f)


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable configuration."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
