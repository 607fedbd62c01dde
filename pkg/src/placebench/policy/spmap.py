"""Top-down semantic-placement map built from depth and predicted heatmaps."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numba
import numpy as np

from ..geometry import CameraModel, backproject, bin_to_voxels, height_collapse
from ..modelmath import scaled_min_area, threshold_heatmap


@dataclass(frozen=True)
class SPMap2D:
    origin: tuple[float, float, float]  # world position of cell (0, 0, 0) corner
    resolution: float
    shape: tuple[int, int]
    nz: int
    evidence: np.ndarray  # float64 accumulated SP point counts
    explored: np.ndarray  # bool
    occupied: np.ndarray  # bool, obstacles seen between the floor and robot height
    bumped: np.ndarray  # bool, cells marked after a collision

    @classmethod
    def empty(cls, origin, resolution: float, shape, nz: int = 52) -> "SPMap2D":
        shape = tuple(int(s) for s in shape)
        return cls(tuple(float(o) for o in origin), float(resolution), shape, int(nz),
                   np.zeros(shape), np.zeros(shape, bool), np.zeros(shape, bool), np.zeros(shape, bool))

    @classmethod
    def for_scene(cls, scene) -> "SPMap2D":
        return cls.empty(scene.origin, scene.resolution, scene.dims[:2], scene.dims[2])

    @property
    def origin_xy(self) -> np.ndarray:
        return np.asarray(self.origin[:2])

    @property
    def blocked(self) -> np.ndarray:
        return self.occupied | self.bumped

    @property
    def free(self) -> np.ndarray:
        return self.explored & ~self.blocked

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(np.floor((x - self.origin[0]) / self.resolution)),
                int(np.floor((y - self.origin[1]) / self.resolution)))

    def cell_center(self, i, j) -> np.ndarray:
        return self.origin_xy + (np.array([i, j], dtype=float) + 0.5) * self.resolution

    def in_bounds(self, i: int, j: int) -> bool:
        return 0 <= i < self.shape[0] and 0 <= j < self.shape[1]

    def with_bump(self, cells) -> "SPMap2D":
        b = self.bumped.copy()
        for i, j in cells:
            if self.in_bounds(i, j):
                b[i, j] = True
        return replace(self, bumped=b)

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.evidence, self.explored, self.occupied, self.bumped):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


@numba.njit(cache=True)
def _carve(explored, ox, oy, res, x0, y0, z0, xs, ys, zs, max_z):
    """Mark cells under each ray segment (x0, y0, z0) -> (xs[k], ys[k], zs[k]) where the ray is below ``max_z``.

    A ray that stays low over a cell leaves no room for anything taller in
    that cell, so those cells count as observed.  The end cell is always marked.
    """
    nx, ny = explored.shape
    for k in range(xs.shape[0]):
        x1 = xs[k]
        y1 = ys[k]
        z1 = zs[k]
        # ray height is linear in f; find where it drops below max_z
        f0 = 1.0
        if z1 < z0:
            f0 = min(1.0, (z0 - max_z) / (z0 - z1)) if z0 > max_z else 0.0
        elif z0 <= max_z:
            f0 = 0.0
        length = np.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2) * (1.0 - f0)
        n = int(np.ceil(length / (0.5 * res))) + 1
        for s in range(n + 1):
            f = f0 + (1.0 - f0) * s / n
            i = int(np.floor((x0 + f * (x1 - x0) - ox) / res))
            j = int(np.floor((y0 + f * (y1 - y0) - oy) / res))
            if 0 <= i < nx and 0 <= j < ny:
                explored[i, j] = True


def _disk_cells(m: "SPMap2D", x: float, y: float, radius: float) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(m.shape[0]), np.arange(m.shape[1]), indexing="ij")
    cx = m.origin[0] + (ii + 0.5) * m.resolution
    cy = m.origin[1] + (jj + 0.5) * m.resolution
    return (cx - x) ** 2 + (cy - y) ** 2 <= radius ** 2


def sp_points(heat: np.ndarray, depth: np.ndarray, cam: CameraModel, tau: float = 0.5,
              min_area: int | None = None):
    """World points under the thresholded heatmap."""
    if min_area is None:
        min_area = scaled_min_area(depth.shape)
    mask = threshold_heatmap(heat, tau, min_area)
    return backproject(depth, cam, mask)


LOW_RAY_HEIGHT = 0.3


def update_sp_map(m: SPMap2D, heat: np.ndarray, depth: np.ndarray, cam: CameraModel,
                  tau: float = 0.5, min_area: int | None = None,
                  robot_height: float = 1.35, base_radius: float | None = None) -> SPMap2D:
    """Add thresholded SP evidence and refresh explored/occupied cells from one frame.

    With ``base_radius`` the cells under the robot base (centered below the
    camera) are marked explored as well.
    """
    heat = np.asarray(heat, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if heat.shape != depth.shape or depth.shape != (cam.height, cam.width):
        raise ValueError("heatmap, depth and camera sizes differ")
    res = m.resolution
    dims = (m.shape[0], m.shape[1], m.nz)

    evidence = m.evidence
    sp = sp_points(heat, depth, cam, tau, min_area)
    if len(sp):
        counts, _ = bin_to_voxels(sp.points, m.origin, res, dims)
        evidence = evidence + height_collapse(counts)

    pc = backproject(depth, cam)
    explored = m.explored.copy()
    occupied = m.occupied
    if len(pc):
        p = pc.points
        ray = p - cam.position
        ray /= np.linalg.norm(ray, axis=1, keepdims=True)
        inside = p + 0.5 * res * ray  # step into the surface that was hit
        c = cam.position
        _carve(explored, m.origin[0], m.origin[1], res, float(c[0]), float(c[1]), float(c[2]),
               np.ascontiguousarray(inside[:, 0]), np.ascontiguousarray(inside[:, 1]),
               np.ascontiguousarray(inside[:, 2]), LOW_RAY_HEIGHT)
        band = (inside[:, 2] > 0.0) & (inside[:, 2] < robot_height)
        if band.any():
            ij = np.floor((inside[band, :2] - m.origin_xy) / res).astype(np.int64)
            ok = (ij[:, 0] >= 0) & (ij[:, 0] < m.shape[0]) & (ij[:, 1] >= 0) & (ij[:, 1] < m.shape[1])
            ij = ij[ok]
            occupied = occupied.copy()
            occupied[ij[:, 0], ij[:, 1]] = True
    if base_radius is not None:
        explored |= _disk_cells(m, float(cam.position[0]), float(cam.position[1]), base_radius)
    return replace(m, evidence=evidence, explored=explored, occupied=occupied)
