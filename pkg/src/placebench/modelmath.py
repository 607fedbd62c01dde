"""Numerics of the language-conditioned placement decoder.

Only the pieces that are pure math live here: projecting and tiling the
text embedding, conditioning decoder features by element-wise product, the
shape contract of the conditioned decoder layers, smoothed dice loss with its
analytic gradient, and heatmap thresholding.  There is no network, no
weights and no training loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DimensionError, as_mask, remove_small_components

EMBED_DIM = 1024
ENCODER_SHAPE = (7, 7, 2048)


def _finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite values")
    return a


def downsample_embedding(e, target_dim: int, projection) -> np.ndarray:
    e = _finite(np.asarray(e, dtype=np.float64).reshape(-1), "embedding")
    W = np.asarray(projection, dtype=np.float64)
    if W.shape != (target_dim, e.size):
        raise DimensionError(f"projection shape {W.shape} != {(target_dim, e.size)}")
    return W @ e


def tile_embedding(e, H: int, W: int) -> np.ndarray:
    """Broadcast a channel vector to an ``(H, W, C)`` tensor."""
    e = np.asarray(e, dtype=np.float64).reshape(-1)
    if H <= 0 or W <= 0 or e.size == 0:
        raise DimensionError("tile dimensions must be positive")
    return np.broadcast_to(e, (H, W, e.size)).copy()


def condition(f, tiled) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    tiled = np.asarray(tiled, dtype=np.float64)
    if f.shape != tiled.shape:
        raise DimensionError(f"feature {f.shape} and embedding {tiled.shape} differ")
    return f * tiled


@dataclass(frozen=True)
class DecoderSchedule:
    """Channel widths of the conditioned decoder layers (each upsamples 2x)."""

    widths: tuple[int, ...] = (1024, 512, 256)
    skip_sources: tuple[str, ...] = ("layer3", "layer2", "layer1")
    encoder_shape: tuple[int, int, int] = ENCODER_SHAPE

    def __post_init__(self):
        if not self.widths or any(w <= 0 for w in self.widths):
            raise ValueError("widths must be positive")
        if any(a <= b for a, b in zip(self.widths, self.widths[1:])):
            raise ValueError("decoder widths must be strictly decreasing")
        if len(self.skip_sources) != len(self.widths):
            raise ValueError("one skip source per conditioned layer")

    def layer_shapes(self) -> list[tuple[int, int, int]]:
        h, w, _ = self.encoder_shape
        out = []
        for c in self.widths:
            h, w = 2 * h, 2 * w
            out.append((h, w, c))
        return out


def condition_decoder(features, embedding, projections, schedule: DecoderSchedule = DecoderSchedule()):
    """Condition each decoder feature map with the projected, tiled embedding."""
    shapes = schedule.layer_shapes()
    if len(features) != len(shapes) or len(projections) != len(shapes):
        raise DimensionError("need one feature map and one projection per conditioned layer")
    out = []
    for f, P, (h, w, c) in zip(features, projections, shapes):
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (h, w, c):
            raise DimensionError(f"decoder feature {f.shape} != contract {(h, w, c)}")
        out.append(condition(f, tile_embedding(downsample_embedding(embedding, c, P), h, w)))
    return out


def skip_connect(decoded, skip) -> np.ndarray:
    """Concatenate an encoder skip feature onto a decoder feature along channels."""
    decoded = np.asarray(decoded, dtype=np.float64)
    skip = np.asarray(skip, dtype=np.float64)
    if decoded.shape[:2] != skip.shape[:2]:
        raise DimensionError(f"spatial mismatch {decoded.shape[:2]} vs {skip.shape[:2]}")
    return np.concatenate([decoded, skip], axis=2)


def dice_loss(pred, target, eps: float = 1.0) -> tuple[float, np.ndarray]:
    """Smoothed dice loss ``1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps)``.

    Returns the loss and its gradient with respect to every prediction pixel.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError(f"prediction {p.shape} and target {t.shape} differ")
    if eps <= 0:
        raise ValueError("eps must be positive")
    num = 2.0 * np.sum(p * t) + eps
    den = np.sum(p) + np.sum(t) + eps
    loss = 1.0 - num / den
    grad = -(2.0 * t * den - num) / (den * den)
    return float(loss), grad


def threshold_heatmap(h, tau: float = 0.5, min_area: int = 25) -> np.ndarray:
    """Binarize at ``value >= tau`` and drop 8-connected blobs under ``min_area``."""
    if not (0.0 <= tau <= 1.0):
        raise ValueError("tau must lie in [0, 1]")
    h = np.asarray(h, dtype=np.float64)
    return remove_small_components(as_mask(h >= tau), min_area)


def scaled_min_area(shape, base: int = 25, base_shape=(224, 224)) -> int:
    """``base`` pixels at ``base_shape``, rescaled by image area."""
    return max(1, int(round(base * (shape[0] * shape[1]) / (base_shape[0] * base_shape[1]))))
