"""Semantic voxel scenes.

A scene is a 3-D grid of instance ids (0 = free).  Every occupied cell
belongs to exactly one instance, and each instance has a category and a kind
(structure, receptacle or object).  Grid axes are (x, y, z) with z up; cell
``(i, j, k)`` spans ``origin + [i, i+1) * resolution`` along each axis.  The
default origin puts a one-voxel floor slab just below ``z = 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from ..categories import LABEL_ID, PALETTE, canonical

STRUCTURE, RECEPTACLE, OBJECT = "structure", "receptacle", "object"


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Instance:
    id: int
    category: str
    kind: str


@dataclass(frozen=True, eq=False)
class SceneSpec:
    grid: np.ndarray  # (nx, ny, nz) int32 instance ids
    instances: tuple[Instance, ...]
    resolution: float = 0.05
    origin: tuple[float, float, float] = (0.0, 0.0, -0.05)
    name: str = "scene"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.resolution <= 0:
            raise SceneError("resolution must be positive")
        g = np.ascontiguousarray(self.grid, dtype=np.int32)
        if g.ndim != 3:
            raise SceneError("grid must be 3-D")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids) or any(i <= 0 for i in ids):
            raise SceneError("instance ids must be unique and positive")
        present = np.unique(g)
        missing = set(present[present > 0].tolist()) - set(ids)
        if missing:
            raise SceneError(f"grid references unknown instances {sorted(missing)}")

    # ---- basic geometry

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.grid.shape)

    @property
    def origin_array(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=np.float64)

    @property
    def extent(self) -> np.ndarray:
        return self.origin_array + np.asarray(self.dims) * self.resolution

    def world_to_cell(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return np.floor((p - self.origin_array) / self.resolution).astype(np.int64)

    def cell_center(self, idx) -> np.ndarray:
        return self.origin_array + (np.asarray(idx, dtype=np.float64) + 0.5) * self.resolution

    def in_bounds(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= 0) and np.all(idx < np.asarray(self.dims)))

    def is_free(self, p) -> bool:
        idx = self.world_to_cell(p)
        return self.in_bounds(idx) and self.grid[tuple(idx)] == 0

    # ---- instances

    @cached_property
    def _by_id(self) -> dict[int, Instance]:
        return {inst.id: inst for inst in self.instances}

    def instance(self, iid: int) -> Instance:
        try:
            return self._by_id[iid]
        except KeyError:
            raise SceneError(f"unknown instance id {iid}") from None

    def instances_of(self, kind: str | None = None, category: str | None = None) -> list[Instance]:
        out = []
        for inst in self.instances:
            if kind is not None and inst.kind != kind:
                continue
            if category is not None and inst.category != canonical(category):
                continue
            out.append(inst)
        return out

    def cells(self, iid: int) -> np.ndarray:
        self.instance(iid)
        return np.argwhere(self.grid == iid)

    def centroid(self, iid: int) -> np.ndarray:
        c = self.cells(iid)
        if c.size == 0:
            raise SceneError(f"instance {iid} has no cells")
        return self.cell_center(c.mean(axis=0))

    @cached_property
    def label_lut(self) -> np.ndarray:
        lut = np.zeros(int(self.grid.max(initial=0)) + 1, dtype=np.int16)
        for inst in self.instances:
            if inst.id < lut.size:
                lut[inst.id] = LABEL_ID[inst.category]
        return lut

    @cached_property
    def labels(self) -> np.ndarray:
        return self.label_lut[self.grid]

    @cached_property
    def occupied(self) -> np.ndarray:
        return self.grid > 0

    def obstacle_map(self, robot_height: float = 1.35) -> np.ndarray:
        """2-D ``(nx, ny)`` map of columns blocked anywhere above the floor up to ``robot_height``."""
        key = ("obstacle", robot_height)
        if key not in self._cache:
            z0 = self.origin[2]
            k_lo = int(math.floor((0.0 - z0) / self.resolution + 1e-9))  # first cell at/above z=0
            k_hi = int(math.ceil((robot_height - z0) / self.resolution - 1e-9))
            k_hi = min(k_hi, self.dims[2])
            self._cache[key] = self.occupied[:, :, k_lo:k_hi].any(axis=2)
        return self._cache[key]

    def remove_object(self, iid: int) -> "SceneSpec":
        """Copy of the scene with instance ``iid`` deleted and its cells freed."""
        self.instance(iid)
        g = np.array(self.grid)
        g[g == iid] = 0
        return replace(
            self, grid=g, instances=tuple(i for i in self.instances if i.id != iid), _cache={}
        )

    def add_cells(self, inst: Instance, cells) -> "SceneSpec":
        """Copy of the scene with ``inst`` occupying ``cells`` (which must be free)."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
        g = np.array(self.grid)
        if np.any(g[tuple(cells.T)] != 0):
            raise SceneError("cells are already occupied")
        if inst.id in self._by_id:
            raise SceneError(f"instance id {inst.id} already present")
        g[tuple(cells.T)] = inst.id
        return replace(self, grid=g, instances=self.instances + (inst,), _cache={})

    def colors(self, label_image: np.ndarray) -> np.ndarray:
        pal = np.zeros((max(PALETTE) + 1, 3), dtype=np.uint8)
        for k, c in PALETTE.items():
            pal[k] = c
        return pal[label_image]

    # ---- serialization

    def to_dict(self) -> dict:
        flat = self.grid.reshape(-1)
        inst_out = []
        order = np.argsort(flat, kind="stable")
        sorted_ids = flat[order]
        for inst in self.instances:
            lo, hi = np.searchsorted(sorted_ids, [inst.id, inst.id + 1])
            idx = np.sort(order[lo:hi])
            inst_out.append({
                "id": inst.id, "category": inst.category, "kind": inst.kind,
                "runs": _runs(idx),
            })
        return {
            "name": self.name,
            "dims": list(self.dims),
            "resolution": self.resolution,
            "origin": list(self.origin),
            "instances": inst_out,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        dims = tuple(int(n) for n in d["dims"])
        flat = np.zeros(int(np.prod(dims)), dtype=np.int32)
        insts = []
        for rec in d["instances"]:
            for start, length in rec["runs"]:
                flat[start:start + length] = rec["id"]
            insts.append(Instance(int(rec["id"]), rec["category"], rec["kind"]))
        return cls(flat.reshape(dims), tuple(insts), float(d["resolution"]),
                   tuple(d["origin"]), d.get("name", "scene"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")))

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _runs(sorted_idx: np.ndarray) -> list[list[int]]:
    if sorted_idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(sorted_idx) != 1) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [sorted_idx.size]])
    return [[int(sorted_idx[s]), int(e - s)] for s, e in zip(starts, ends)]


class SceneBuilder:
    """Incrementally paint axis-aligned boxes into a voxel grid."""

    def __init__(self, size_xy=(5.0, 5.0), height: float = 2.5, resolution: float = 0.05,
                 name: str = "scene"):
        self.resolution = resolution
        nx = int(round(size_xy[0] / resolution))
        ny = int(round(size_xy[1] / resolution))
        nz = int(round(height / resolution)) + 1
        self.origin = (0.0, 0.0, -resolution)
        self.grid = np.zeros((nx, ny, nz), dtype=np.int32)
        self.instances: list[Instance] = []
        self.name = name

    def _new_id(self) -> int:
        return max((i.id for i in self.instances), default=0) + 1

    def _slices(self, lo, hi):
        o, r = np.asarray(self.origin), self.resolution
        # a cell is painted when its center lies inside [lo, hi)
        a = np.ceil((np.asarray(lo, float) - o) / r - 0.5 - 1e-9).astype(int)
        b = np.ceil((np.asarray(hi, float) - o) / r - 0.5 - 1e-9).astype(int)
        a = np.clip(a, 0, self.grid.shape)
        b = np.clip(b, 0, self.grid.shape)
        return tuple(slice(int(x), int(y)) for x, y in zip(a, b))

    def box_is_free(self, lo, hi) -> bool:
        return not self.grid[self._slices(lo, hi)].any()

    def add_instance(self, category: str, kind: str) -> int:
        cat = canonical(category)
        if cat is None:
            raise SceneError(f"unknown category {category!r}")
        iid = self._new_id()
        self.instances.append(Instance(iid, cat, kind))
        return iid

    def paint(self, iid: int, lo, hi, overwrite: bool = False) -> None:
        sl = self._slices(lo, hi)
        region = self.grid[sl]
        if overwrite:
            region[...] = iid
        else:
            region[region == 0] = iid

    def add_box(self, category: str, kind: str, lo, hi) -> int:
        iid = self.add_instance(category, kind)
        self.paint(iid, lo, hi)
        return iid

    def add_room(self, wall_height: float = 2.4) -> None:
        nx, ny, nz = self.grid.shape
        r = self.resolution
        floor = self.add_instance("Floor", STRUCTURE)
        self.grid[:, :, 0] = floor
        wall = self.add_instance("Wall", STRUCTURE)
        top = min(nz, 1 + int(round(wall_height / r)))
        self.grid[0, :, 1:top] = wall
        self.grid[nx - 1, :, 1:top] = wall
        self.grid[:, 0, 1:top] = wall
        self.grid[:, ny - 1, 1:top] = wall

    def build(self) -> SceneSpec:
        used = set(np.unique(self.grid).tolist())
        insts = tuple(i for i in self.instances if i.id in used)
        return SceneSpec(self.grid.copy(), insts, self.resolution, self.origin, self.name)
