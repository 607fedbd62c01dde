"""Placeable receptacle surfaces and ground-truth placement regions.

A receptacle cell is placeable when the ``min_clearance`` cells stacked
directly above it are all free.  A placeable cell belongs to the ground-truth
placement area of an object category when some axis-aligned placement of the
category's footprint covering that cell lies entirely on free placeable cells
of a single receptacle at a single height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..categories import FOOTPRINTS, canonical
from ..geometry import RegionSet, connected_components
from .render import Render, cell_lookup, top_face_mask
from .scene import RECEPTACLE, SceneSpec

MIN_CLEARANCE = 4


@dataclass(frozen=True)
class PlaceableSurface:
    receptacle_id: int
    category: str
    cells: np.ndarray  # (n, 3) cell indices

    def cell_mask(self, dims) -> np.ndarray:
        m = np.zeros(dims, dtype=bool)
        m[tuple(self.cells.T)] = True
        return m

    def view_mask(self, rend: Render, dims) -> np.ndarray:
        """Pixels showing the top face of this surface in a render."""
        return top_face_mask(rend, self.cell_mask(dims))


def clear_above(occupied: np.ndarray, clearance: int) -> np.ndarray:
    """``out[i,j,k]`` is True when cells ``k+1 .. k+clearance`` are free (or outside the grid)."""
    nz = occupied.shape[2]
    occ = np.concatenate([occupied.astype(np.int32), np.zeros(occupied.shape[:2] + (clearance,), np.int32)], axis=2)
    csum = np.concatenate([np.zeros(occupied.shape[:2] + (1,), np.int32), np.cumsum(occ, axis=2)], axis=2)
    # occupied count in cells k+1 .. k+clearance
    k = np.arange(nz)
    count = csum[:, :, k + clearance + 1] - csum[:, :, k + 1]
    return count == 0


def surface_owner_grid(scene: SceneSpec, min_clearance: int = MIN_CLEARANCE) -> np.ndarray:
    """3-D grid holding the receptacle id at every placeable cell, else 0."""
    key = ("surface_owner", min_clearance)
    if key not in scene._cache:
        rec_ids = [i.id for i in scene.instances_of(kind=RECEPTACLE)]
        is_rec = np.isin(scene.grid, rec_ids) if rec_ids else np.zeros(scene.dims, dtype=bool)
        placeable = is_rec & clear_above(scene.occupied, min_clearance)
        scene._cache[key] = np.where(placeable, scene.grid, 0).astype(np.int32)
    return scene._cache[key]


def extract_placeable_surfaces(scene: SceneSpec, categories=None,
                               min_clearance: int = MIN_CLEARANCE) -> list[PlaceableSurface]:
    owner = surface_owner_grid(scene, min_clearance)
    wanted = None if categories is None else {canonical(c) for c in categories}
    out = []
    for inst in scene.instances_of(kind=RECEPTACLE):
        if wanted is not None and inst.category not in wanted:
            continue
        cells = np.argwhere(owner == inst.id)
        if len(cells):
            out.append(PlaceableSurface(inst.id, inst.category, cells))
    return out


def footprint_cells(category: str, resolution: float) -> tuple[int, int]:
    key = canonical(category)
    if key not in FOOTPRINTS:
        raise KeyError(f"no footprint for category {category!r}")
    fx, fy = FOOTPRINTS[key]
    return (max(1, int(math.ceil(fx / resolution - 1e-9))),
            max(1, int(math.ceil(fy / resolution - 1e-9))))


def _box_sum(a: np.ndarray, h: int, w: int) -> np.ndarray:
    """Sum of ``a`` over every ``h x w`` window, indexed by the window's low corner."""
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int64)
    s[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    return s[h:, w:] - s[:-h, w:] - s[h:, :-w] + s[:-h, :-w]


def footprint_cover(free: np.ndarray, h: int, w: int) -> np.ndarray:
    """Cells covered by at least one ``h x w`` window that lies fully inside ``free``."""
    free = np.asarray(free, dtype=bool)
    out = np.zeros(free.shape, dtype=bool)
    if free.shape[0] < h or free.shape[1] < w:
        return out
    fits = _box_sum(free.astype(np.int64), h, w) == h * w
    if not fits.any():
        return out
    # cell (i, j) is covered if a fitting window starts in [i-h+1, i] x [j-w+1, j]
    padded = np.zeros((free.shape[0] + h - 1, free.shape[1] + w - 1), dtype=np.int64)
    padded[h - 1:h - 1 + fits.shape[0], w - 1:w - 1 + fits.shape[1]] = fits
    return _box_sum(padded, h, w) > 0


def placement_cells(scene: SceneSpec, category: str, receptacle_categories,
                    min_clearance: int = MIN_CLEARANCE) -> np.ndarray:
    """3-D mask of surface cells inside some fitting footprint placement."""
    recs = tuple(sorted({c for c in (canonical(r) for r in receptacle_categories) if c}))
    key = ("placement", canonical(category), recs, min_clearance)
    if key in scene._cache:
        return scene._cache[key]
    owner = surface_owner_grid(scene, min_clearance)
    out = np.zeros(scene.dims, dtype=bool)
    a, b = footprint_cells(category, scene.resolution)
    for inst in scene.instances_of(kind=RECEPTACLE):
        if inst.category not in recs:
            continue
        mine = owner == inst.id
        for k in np.flatnonzero(mine.any(axis=(0, 1))):
            layer = mine[:, :, k]
            cover = footprint_cover(layer, a, b)
            if a != b:
                cover |= footprint_cover(layer, b, a)
            out[:, :, k] |= cover
    scene._cache[key] = out
    return out


def surface_cells(scene: SceneSpec, receptacle_categories, min_clearance: int = MIN_CLEARANCE) -> np.ndarray:
    recs = {c for c in (canonical(r) for r in receptacle_categories) if c}
    owner = surface_owner_grid(scene, min_clearance)
    ids = [i.id for i in scene.instances_of(kind=RECEPTACLE) if i.category in recs]
    if not ids:
        return np.zeros(scene.dims, dtype=bool)
    return np.isin(owner, ids)


def gt_placements(scene: SceneSpec, category: str, rend: Render, receptacle_categories,
                  min_clearance: int = MIN_CLEARANCE, connectivity: int = 8) -> RegionSet:
    """Visible ground-truth placement regions of ``category`` in a rendered view."""
    cells = placement_cells(scene, category, receptacle_categories, min_clearance)
    return connected_components(top_face_mask(rend, cells), connectivity)


def surface_regions(scene: SceneSpec, rend: Render, receptacle_categories,
                    min_clearance: int = MIN_CLEARANCE, connectivity: int = 8) -> RegionSet:
    """Visible upward surfaces of the listed receptacle categories, one region per blob."""
    cells = surface_cells(scene, receptacle_categories, min_clearance)
    return connected_components(top_face_mask(rend, cells), connectivity)


def surface_id_image(scene: SceneSpec, rend: Render, min_clearance: int = MIN_CLEARANCE) -> np.ndarray:
    """Receptacle id of the placeable surface seen at each pixel, 0 elsewhere."""
    return cell_lookup(rend, surface_owner_grid(scene, min_clearance), top_only=True)
