"""Mask algebra, region extraction and pinhole camera math.

Masks are plain ``numpy`` boolean arrays of shape ``(height, width)``.  All
overlap measures count pixels with exact integer arithmetic and only divide
at the end in float64.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

_STRUCTURE = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


class DimensionError(ValueError):
    pass


class EmptyPredictionError(ValueError):
    pass


def as_mask(a, shape: tuple[int, int] | None = None) -> np.ndarray:
    m = np.asarray(a, dtype=bool)
    if m.ndim != 2 or m.shape[0] <= 0 or m.shape[1] <= 0:
        raise DimensionError(f"mask must be a non-empty 2-D array, got shape {m.shape}")
    if shape is not None and m.shape != tuple(shape):
        raise DimensionError(f"mask shape {m.shape} != expected {tuple(shape)}")
    return m


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise DimensionError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    return a, b


def iou(a, b) -> float:
    """Intersection over union of two binary masks; 0.0 when both are empty."""
    a, b = _pair(a, b)
    inter = int(np.count_nonzero(a & b))
    denom = int(np.count_nonzero(a)) + int(np.count_nonzero(b)) - inter
    if denom == 0:
        return 0.0
    return inter / denom


def iop(gt, pred) -> float:
    """Intersection over prediction: the share of ``pred`` lying inside ``gt``."""
    gt, pred = _pair(gt, pred)
    area = int(np.count_nonzero(pred))
    if area == 0:
        raise EmptyPredictionError("iop is undefined for an empty prediction")
    return int(np.count_nonzero(gt & pred)) / area


@dataclass(frozen=True)
class RegionSet:
    """An ordered list of regions (boolean masks) sharing one frame."""

    masks: tuple[np.ndarray, ...]
    shape: tuple[int, int]

    def __post_init__(self):
        h, w = self.shape
        if h <= 0 or w <= 0:
            raise DimensionError("frame must be non-empty")
        for m in self.masks:
            if m.shape != (h, w):
                raise DimensionError(f"region shape {m.shape} outside frame {self.shape}")

    @classmethod
    def empty(cls, shape) -> "RegionSet":
        return cls((), (int(shape[0]), int(shape[1])))

    @classmethod
    def from_masks(cls, masks: Sequence, shape=None) -> "RegionSet":
        masks = tuple(as_mask(m) for m in masks)
        if shape is None:
            if not masks:
                raise DimensionError("shape is required for an empty region set")
            shape = masks[0].shape
        return cls(masks, (int(shape[0]), int(shape[1])))

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.masks)

    def __getitem__(self, i) -> np.ndarray:
        return self.masks[i]

    @property
    def areas(self) -> list[int]:
        return [int(np.count_nonzero(m)) for m in self.masks]

    def union(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        for m in self.masks:
            out |= m
        return out

    def is_disjoint(self) -> bool:
        total = sum(self.areas)
        return total == int(np.count_nonzero(self.union()))

    def flat(self) -> np.ndarray:
        """Regions stacked as an ``(n, h*w)`` int64 matrix, for batched overlaps."""
        if not self.masks:
            return np.zeros((0, self.shape[0] * self.shape[1]), dtype=np.int64)
        return np.stack([m.reshape(-1) for m in self.masks]).astype(np.int64)


def connected_components(mask, connectivity: int = 8) -> RegionSet:
    """Split ``mask`` into maximal connected regions.

    Regions are ordered by their first pixel in row-major order, i.e. by
    ``(min row, min col of that row)``.
    """
    m = as_mask(mask)
    if connectivity not in _STRUCTURE:
        raise ValueError("connectivity must be 4 or 8")
    labels, n = ndimage.label(m, structure=_STRUCTURE[connectivity])
    if n == 0:
        return RegionSet.empty(m.shape)
    flat = labels.reshape(-1)
    nz = np.flatnonzero(flat)
    # first occurrence of each label in raster order
    first = np.full(n + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat[nz], nz)
    order = np.argsort(first[1:], kind="stable") + 1
    return RegionSet(tuple(labels == k for k in order), m.shape)


def remove_small_components(mask, min_area: int, connectivity: int = 8) -> np.ndarray:
    m = as_mask(mask)
    if min_area <= 1:
        return m.copy()
    labels, n = ndimage.label(m, structure=_STRUCTURE[connectivity])
    if n == 0:
        return m.copy()
    sizes = np.bincount(labels.reshape(-1), minlength=n + 1)
    keep = sizes >= min_area
    keep[0] = False
    return keep[labels]


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    normalized: bool = True

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box {vals}")
        if self.normalized and not all(0.0 <= v <= 1.0 for v in vals):
            raise ValueError(f"normalized box outside [0, 1]: {vals}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def bbox_to_mask(box: BBox, width: int, height: int) -> tuple[np.ndarray, bool]:
    """Rasterize a normalized box.  Returns ``(mask, degenerate)``.

    Columns ``floor(x_min*W) .. ceil(x_max*W) - 1`` (and likewise rows) are
    set.  A box that rounds to zero area yields an empty mask and
    ``degenerate=True``.
    """
    if not box.normalized:
        raise ValueError("bbox_to_mask expects a normalized box")
    c0 = min(max(math.floor(box.x_min * width), 0), width)
    c1 = min(max(math.ceil(box.x_max * width), 0), width)
    r0 = min(max(math.floor(box.y_min * height), 0), height)
    r1 = min(max(math.ceil(box.y_max * height), 0), height)
    mask = np.zeros((height, width), dtype=bool)
    if c1 <= c0 or r1 <= r0:
        return mask, True
    mask[r0:r1, c0:c1] = True
    return mask, False


def pixel_bbox_of(mask) -> BBox | None:
    """Tight pixel-unit box ``[x_min, y_min, x_max, y_max]`` (inclusive) of a mask."""
    m = as_mask(mask)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(m.any(axis=0))
    return BBox(float(cols[0]), float(rows[0]), float(cols[-1]), float(rows[-1]), normalized=False)


def box_mask(box: BBox, shape) -> np.ndarray:
    """Mask of an inclusive pixel-unit box, clamped to ``shape``."""
    h, w = shape
    m = np.zeros((h, w), dtype=bool)
    c0, r0 = max(int(math.floor(box.x_min)), 0), max(int(math.floor(box.y_min)), 0)
    c1, r1 = min(int(math.floor(box.x_max)), w - 1), min(int(math.floor(box.y_max)), h - 1)
    if c1 >= c0 and r1 >= r0:
        m[r0:r1 + 1, c0:c1 + 1] = True
    return m


# --------------------------------------------------------------------------
# cameras and point clouds


def rotation_is_proper(R: np.ndarray, atol: float = 1e-6) -> bool:
    R = np.asarray(R, dtype=np.float64)
    return (
        R.shape == (3, 3)
        and np.allclose(R.T @ R, np.eye(3), atol=atol)
        and abs(np.linalg.det(R) - 1.0) < atol
    )


def look_rotation(forward, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation for an OpenCV camera (x right, y down, z forward)."""
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(f, up)
    n = np.linalg.norm(right)
    if n < 1e-9:
        # looking straight up or down; pick any horizontal right vector
        right = np.cross(f, np.array([1.0, 0.0, 0.0]))
        n = np.linalg.norm(right)
        if n < 1e-9:
            right = np.cross(f, np.array([0.0, 1.0, 0.0]))
            n = np.linalg.norm(right)
    right /= n
    down = np.cross(f, right)
    return np.stack([right, down, f], axis=1)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera.  ``rotation``/``translation`` map camera to world."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not rotation_is_proper(R):
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float, rotation=None, translation=None) -> "CameraModel":
        f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(
            fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
            width=width, height=height,
            rotation=np.eye(3) if rotation is None else rotation,
            translation=np.zeros(3) if translation is None else translation,
        )

    @classmethod
    def look_at(cls, position, target, width=640, height=480, hfov_deg=58.0) -> "CameraModel":
        position = np.asarray(position, dtype=np.float64)
        R = look_rotation(np.asarray(target, dtype=np.float64) - position)
        return cls.from_fov(width, height, hfov_deg, rotation=R, translation=position)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def position(self) -> np.ndarray:
        return self.translation

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    def with_pose(self, rotation, translation) -> "CameraModel":
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.width, self.height, rotation, translation)

    def world_to_camera(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return (p - self.translation) @ self.rotation

    def project(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World points -> (u, v, z) with u along columns and v along rows."""
        pc = self.world_to_camera(points)
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        return u, v, z

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"]),
                   np.asarray(d["rotation"]), np.asarray(d["translation"]))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    pixels: np.ndarray | None = None  # (row, col) each point came from
    labels: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, idx) -> "PointCloud":
        return PointCloud(
            self.points[idx],
            None if self.pixels is None else self.pixels[idx],
            None if self.labels is None else self.labels[idx],
        )


def backproject(depth, cam: CameraModel, mask=None, frame: str = "world") -> PointCloud:
    """Lift valid depth pixels to 3-D.

    ``depth`` holds z-depth in meters; values that are non-finite or ``<= 0``
    are skipped.  With ``frame="camera"`` the pose is not applied.
    """
    d = np.asarray(depth, dtype=np.float64)
    if d.shape != (cam.height, cam.width):
        raise DimensionError(f"depth shape {d.shape} != camera {(cam.height, cam.width)}")
    valid = np.isfinite(d) & (d > 0)
    if mask is not None:
        valid &= as_mask(mask, d.shape)
    rows, cols = np.nonzero(valid)
    z = d[rows, cols]
    x = (cols - cam.cx) * z / cam.fx
    y = (rows - cam.cy) * z / cam.fy
    pc = np.stack([x, y, z], axis=1)
    if frame == "world":
        pc = pc @ cam.rotation.T + cam.translation
    elif frame != "camera":
        raise ValueError(f"unknown frame {frame!r}")
    return PointCloud(pc, pixels=np.stack([rows, cols], axis=1))


def bin_to_voxels(points, origin, resolution: float, dims) -> tuple[np.ndarray, int]:
    """Histogram points into half-open cells.  Returns ``(counts, dropped)``."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    p = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64).reshape(-1, 3)
    dims = tuple(int(n) for n in dims)
    idx = np.floor((p - np.asarray(origin, dtype=np.float64)) / resolution).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.asarray(dims)), axis=1)
    counts = np.zeros(dims, dtype=np.int64)
    if inside.any():
        flat = np.ravel_multi_index(idx[inside].T, dims)
        counts.reshape(-1)[:] = np.bincount(flat, minlength=counts.size)
    return counts, int(np.count_nonzero(~inside))


def height_collapse(voxels) -> np.ndarray:
    """Sum a ``(nx, ny, nz)`` count grid over its last (height) axis."""
    v = np.asarray(voxels)
    if v.ndim != 3:
        raise DimensionError("expected a 3-D voxel grid")
    return v.sum(axis=2)
