"""Depth and semantic rendering by voxel traversal (3-D DDA).

Each pixel ray ``o + t * R @ [(u - cx)/fx, (v - cy)/fy, 1]`` is walked cell
by cell through the instance grid until it enters an occupied cell.  With
that parametrization ``t`` at the entry point is the z-depth of the hit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..geometry import CameraModel
from .scene import SceneError, SceneSpec

DEFAULT_MAX_RANGE = 10.0

# face codes: which face of the hit cell the ray entered through
FACE_NONE = -1
FACE_POS_X, FACE_NEG_X, FACE_POS_Y, FACE_NEG_Y, FACE_POS_Z, FACE_NEG_Z = range(6)


@numba.njit(cache=True)
def _trace(grid, ox, oy, oz, dx, dy, dz, max_t):
    """Walk one ray in grid units.  Returns (t, i, j, k, face); t < 0 on miss."""
    nx, ny, nz = grid.shape
    inf = np.inf
    t0 = 0.0
    t1 = max_t
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    n = (nx, ny, nz)
    entry_axis = -1
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < 0.0 or o[a] >= n[a]:
                return -1.0, -1, -1, -1, -1
        else:
            ta = (0.0 - o[a]) / d[a]
            tb = (n[a] - o[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
                entry_axis = a
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return -1.0, -1, -1, -1, -1

    px = ox + t0 * dx
    py = oy + t0 * dy
    pz = oz + t0 * dz
    i = int(np.floor(px))
    j = int(np.floor(py))
    k = int(np.floor(pz))
    if entry_axis >= 0:
        # snap the entry coordinate onto the boundary cell
        if entry_axis == 0:
            i = 0 if dx > 0 else nx - 1
        elif entry_axis == 1:
            j = 0 if dy > 0 else ny - 1
        else:
            k = 0 if dz > 0 else nz - 1
    i = min(max(i, 0), nx - 1)
    j = min(max(j, 0), ny - 1)
    k = min(max(k, 0), nz - 1)

    si = 1 if dx > 0 else (-1 if dx < 0 else 0)
    sj = 1 if dy > 0 else (-1 if dy < 0 else 0)
    sk = 1 if dz > 0 else (-1 if dz < 0 else 0)
    tmx = ((i + (1 if si > 0 else 0)) - ox) / dx if si != 0 else inf
    tmy = ((j + (1 if sj > 0 else 0)) - oy) / dy if sj != 0 else inf
    tmz = ((k + (1 if sk > 0 else 0)) - oz) / dz if sk != 0 else inf
    tdx = abs(1.0 / dx) if si != 0 else inf
    tdy = abs(1.0 / dy) if sj != 0 else inf
    tdz = abs(1.0 / dz) if sk != 0 else inf

    t = t0
    axis = entry_axis
    while True:
        if grid[i, j, k] != 0:
            face = -1
            if axis == 0:
                face = 1 if si > 0 else 0
            elif axis == 1:
                face = 3 if sj > 0 else 2
            elif axis == 2:
                face = 5 if sk > 0 else 4
            return t, i, j, k, face
        if tmx < tmy:
            if tmx < tmz:
                axis = 0
            else:
                axis = 2
        else:
            if tmy < tmz:
                axis = 1
            else:
                axis = 2
        if axis == 0:
            t = tmx
            tmx += tdx
            i += si
            if i < 0 or i >= nx:
                return -1.0, -1, -1, -1, -1
        elif axis == 1:
            t = tmy
            tmy += tdy
            j += sj
            if j < 0 or j >= ny:
                return -1.0, -1, -1, -1, -1
        else:
            t = tmz
            tmz += tdz
            k += sk
            if k < 0 or k >= nz:
                return -1.0, -1, -1, -1, -1
        if t > max_t:
            return -1.0, -1, -1, -1, -1


@numba.njit(cache=True)
def _render(grid, origin, res, R, pos, fx, fy, cx, cy, W, H, max_range,
            depth, hit, face):
    ox = (pos[0] - origin[0]) / res
    oy = (pos[1] - origin[1]) / res
    oz = (pos[2] - origin[2]) / res
    for r in range(H):
        yc = (r - cy) / fy
        for c in range(W):
            xc = (c - cx) / fx
            wx = R[0, 0] * xc + R[0, 1] * yc + R[0, 2]
            wy = R[1, 0] * xc + R[1, 1] * yc + R[1, 2]
            wz = R[2, 0] * xc + R[2, 1] * yc + R[2, 2]
            norm = np.sqrt(wx * wx + wy * wy + wz * wz)
            max_t = max_range / norm
            t, i, j, k, f = _trace(grid, ox, oy, oz, wx / res, wy / res, wz / res, max_t)
            if t >= 0.0:
                depth[r, c] = t
                hit[r, c, 0] = i
                hit[r, c, 1] = j
                hit[r, c, 2] = k
                face[r, c] = f


@dataclass(frozen=True)
class Render:
    depth: np.ndarray  # z-depth in meters, 0 where invalid
    instance: np.ndarray  # instance id per pixel, 0 = background
    label: np.ndarray  # semantic label id per pixel, 0 = background
    hit: np.ndarray  # (H, W, 3) hit cell index, -1 = none
    face: np.ndarray  # entry face code, -1 = none
    camera: CameraModel

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0


def render(scene: SceneSpec, cam: CameraModel, max_range: float = DEFAULT_MAX_RANGE) -> Render:
    """Render depth, instance and label images of ``scene`` from ``cam``."""
    start = scene.world_to_cell(cam.position)
    if scene.in_bounds(start) and scene.grid[tuple(start)] != 0:
        raise SceneError(f"camera at {cam.position.tolist()} is inside an occupied voxel")
    H, W = cam.height, cam.width
    depth = np.zeros((H, W), dtype=np.float64)
    hit = np.full((H, W, 3), -1, dtype=np.int64)
    face = np.full((H, W), -1, dtype=np.int8)
    _render(scene.grid, scene.origin_array, float(scene.resolution),
            np.ascontiguousarray(cam.rotation), np.ascontiguousarray(cam.position),
            float(cam.fx), float(cam.fy), float(cam.cx), float(cam.cy), W, H, float(max_range),
            depth, hit, face)
    ok = hit[..., 0] >= 0
    inst = np.zeros((H, W), dtype=np.int32)
    inst[ok] = scene.grid[hit[ok, 0], hit[ok, 1], hit[ok, 2]]
    label = np.zeros((H, W), dtype=np.int16)
    label[ok] = scene.label_lut[inst[ok]]
    return Render(depth, inst, label, hit, face, cam)


def raycast_depth(scene: SceneSpec, cam: CameraModel, max_range: float = DEFAULT_MAX_RANGE) -> np.ndarray:
    return render(scene, cam, max_range).depth


def render_semantic(scene: SceneSpec, cam: CameraModel,
                    max_range: float = DEFAULT_MAX_RANGE) -> tuple[np.ndarray, np.ndarray]:
    r = render(scene, cam, max_range)
    return r.label, r.instance


def render_rgb(scene: SceneSpec, rend: Render) -> np.ndarray:
    """Flat per-category colors, black background."""
    return scene.colors(rend.label)


def top_face_mask(rend: Render, cell_mask: np.ndarray) -> np.ndarray:
    """Pixels whose ray entered a ``cell_mask`` cell through its upward face."""
    ok = rend.face == FACE_POS_Z
    out = np.zeros(ok.shape, dtype=bool)
    h = rend.hit[ok]
    out[ok] = cell_mask[h[:, 0], h[:, 1], h[:, 2]]
    return out


def cell_lookup(rend: Render, cell_values: np.ndarray, top_only: bool = True, fill=0) -> np.ndarray:
    """Per-pixel value of a 3-D array at the hit cell (optionally top faces only)."""
    ok = rend.face == FACE_POS_Z if top_only else rend.hit[..., 0] >= 0
    out = np.full(ok.shape, fill, dtype=cell_values.dtype)
    h = rend.hit[ok]
    out[ok] = cell_values[h[:, 0], h[:, 1], h[:, 2]]
    return out
