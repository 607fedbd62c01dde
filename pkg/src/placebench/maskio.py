"""Serialization of masks, heatmaps and depth images.

RLE records look like ``{"w": W, "h": H, "rle": [zeros, ones, zeros, ...]}``
over the row-major pixel sequence, always starting with a (possibly empty)
run of zeros.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def encode_rle(mask) -> dict:
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    flat = m.reshape(-1).astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0] == 1:
        runs = [0] + runs
    return {"w": int(w), "h": int(h), "rle": [int(r) for r in runs]}


def decode_rle(rec: dict) -> np.ndarray:
    w, h, runs = int(rec["w"]), int(rec["h"]), rec["rle"]
    if sum(runs) != w * h:
        raise ValueError(f"RLE covers {sum(runs)} pixels, frame has {w * h}")
    vals = np.zeros(len(runs), dtype=bool)
    vals[1::2] = True
    return np.repeat(vals, runs).reshape(h, w)


def save_mask_png(mask, path) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool)).convert("1").save(path)


def load_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("1"), dtype=bool)


def save_heatmap_png(heat, path) -> None:
    h = np.clip(np.asarray(heat, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(h * 65535.0).astype(np.uint16)).save(path)


def load_heatmap_png(path) -> np.ndarray:
    with Image.open(path) as im:
        scale = 65535.0 if im.mode.startswith("I") else 255.0
        a = np.asarray(im, dtype=np.float64)
    if a.ndim == 3:
        a = a[..., 0]
    return np.clip(a / scale, 0.0, 1.0)


def save_depth_png(depth, path) -> None:
    """Depth in meters -> 16-bit millimeters; invalid pixels become 0."""
    d = np.asarray(depth, dtype=np.float64)
    mm = np.where(np.isfinite(d) & (d > 0), np.round(d * 1000.0), 0.0)
    Image.fromarray(np.clip(mm, 0, 65535).astype(np.uint16)).save(path)


def load_depth_png(path) -> np.ndarray:
    return np.asarray(Image.open(path), dtype=np.float64) / 1000.0


def save_rgb_png(rgb, path) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)


def load_rgb_png(path) -> np.ndarray:
    return np.asarray(Image.open(Path(path)).convert("RGB"), dtype=np.uint8)
