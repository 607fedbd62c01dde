"""Seeded procedural rooms with furniture, clutter objects and placement episodes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..categories import FOOTPRINTS, OBJECT_HEIGHTS, canonical
from .agent import AgentState, state_is_free
from .scene import OBJECT, RECEPTACLE, SceneBuilder, SceneSpec

# (x extent, y extent, top height) in the unrotated frame; the back is the +y side
RECEPTACLE_SHAPES = {
    "Couch": (2.0, 0.9, 0.45),
    "Sofa": (2.0, 0.9, 0.45),
    "Armchair": (0.9, 0.9, 0.45),
    "Bed": (2.0, 1.6, 0.55),
    "Bench": (1.2, 0.4, 0.45),
    "Table": (1.2, 0.8, 0.75),
    "Desk": (1.2, 0.7, 0.75),
    "Coffee Table": (1.0, 0.6, 0.45),
    "Kitchen Counter": (2.0, 0.6, 0.9),
    "Chest of Drawers": (1.0, 0.5, 0.9),
    "Bedside Table": (0.5, 0.45, 0.6),
    "Nightstand": (0.5, 0.45, 0.6),
    "End Table": (0.5, 0.5, 0.55),
    "Shelf": (0.9, 0.35, 1.0),
}
SEATED = {"Couch", "Sofa", "Armchair"}
LEGGED = {"Table", "Desk", "Coffee Table"}

WALL_GAP = 0.05  # wall thickness; furniture "against the wall" starts here
AISLE = 0.6  # minimum free gap between furniture pieces, or furniture and walls


@dataclass
class Placed:
    iid: int
    category: str
    lo: tuple[float, float]
    hi: tuple[float, float]
    # rectangles (x0, y0, x1, y1, z_top) an object can stand on
    tops: list[tuple[float, float, float, float, float]] = field(default_factory=list)


def _rot_rect(x0, y0, dx, dy, rot, a, b, c, d):
    """Map a local rect [a,c]x[b,d] of a dx x dy footprint rotated by ``rot`` quarter turns."""
    pts = [(a, b), (c, d)]
    out = []
    for u, v in pts:
        if rot == 0:
            p = (u, v)
        elif rot == 1:
            p = (dy - v, u)
        elif rot == 2:
            p = (dx - u, dy - v)
        else:
            p = (v, dx - u)
        out.append(p)
    (u0, v0), (u1, v1) = out
    return (x0 + min(u0, u1), y0 + min(v0, v1), x0 + max(u0, u1), y0 + max(v0, v1))


def add_receptacle(b: SceneBuilder, category: str, x0: float, y0: float, rot: int = 0) -> Placed:
    """Paint a receptacle with its lower-left footprint corner at ``(x0, y0)``."""
    cat = canonical(category)
    dx, dy, top = RECEPTACLE_SHAPES[cat]
    iid = b.add_instance(cat, RECEPTACLE)
    fx, fy = (dx, dy) if rot % 2 == 0 else (dy, dx)

    def box(a, bb, c, d, z0, z1):
        r = _rot_rect(x0, y0, dx, dy, rot, a, bb, c, d)
        b.paint(iid, (r[0], r[1], z0), (r[2], r[3], z1))
        return r

    tops = []
    if cat in SEATED:
        arm = 0.15
        back = 0.2
        box(0, 0, dx, dy, 0.0, top)
        r = box(0, dy - back, dx, dy, top, 0.85)
        tops.append(r + (0.85,))
        box(0, 0, arm, dy - back, top, 0.65)
        box(dx - arm, 0, dx, dy - back, top, 0.65)
        tops.append(_rot_rect(x0, y0, dx, dy, rot, arm, 0, dx - arm, dy - back) + (top,))
    elif cat == "Bed":
        box(0, 0, dx, dy, 0.0, top)
        box(0, dy - 0.1, dx, dy, top, 1.0)
        tops.append(_rot_rect(x0, y0, dx, dy, rot, 0, 0, dx, dy - 0.1) + (top,))
    elif cat in LEGGED:
        slab = 0.05
        box(0, 0, dx, dy, top - slab, top)
        leg = 0.05
        for a, c in ((0, leg), (dx - leg, dx)):
            for bb, d in ((0, leg), (dy - leg, dy)):
                box(a, bb, c, d, 0.0, top - slab)
        tops.append(_rot_rect(x0, y0, dx, dy, rot, 0, 0, dx, dy) + (top,))
    else:
        box(0, 0, dx, dy, 0.0, top)
        tops.append(_rot_rect(x0, y0, dx, dy, rot, 0, 0, dx, dy) + (top,))
    return Placed(iid, cat, (x0, y0), (x0 + fx, y0 + fy), tops)


def add_object(b: SceneBuilder, category: str, host: Placed, rng: np.random.Generator,
               tries: int = 20) -> int | None:
    """Stand an object on a free spot of one of ``host``'s top rectangles."""
    cat = canonical(category)
    fx, fy = FOOTPRINTS[cat]
    h = OBJECT_HEIGHTS[cat]
    for _ in range(tries):
        x0, y0, x1, y1, z = host.tops[int(rng.integers(len(host.tops)))]
        if x1 - x0 < fx or y1 - y0 < fy:
            continue
        # clamp: x1 - fx can round below x0 when the top is exactly one footprint wide
        ox = rng.uniform(x0, max(x0, x1 - fx))
        oy = rng.uniform(y0, max(y0, y1 - fy))
        lo, hi = (ox, oy, z), (ox + fx, oy + fy, z + h)
        if b.box_is_free(lo, hi):
            return b.add_box(cat, OBJECT, lo, hi)
    return None


def _fits(placed: list[Placed], lo, hi, room) -> bool:
    if lo[0] < WALL_GAP - 1e-9 or lo[1] < WALL_GAP - 1e-9:
        return False
    if hi[0] > room[0] - WALL_GAP + 1e-9 or hi[1] > room[1] - WALL_GAP + 1e-9:
        return False
    for p in placed:
        if lo[0] < p.hi[0] + AISLE and p.lo[0] < hi[0] + AISLE and \
                lo[1] < p.hi[1] + AISLE and p.lo[1] < hi[1] + AISLE:
            return False
    return True


def _snap(v: float, size: float, extent: float) -> float:
    """Push a coordinate flush to the wall when the gap would be too narrow to walk through."""
    if v - WALL_GAP < AISLE:
        return WALL_GAP
    if extent - WALL_GAP - (v + size) < AISLE:
        return extent - WALL_GAP - size
    return v


def try_place_receptacle(b: SceneBuilder, placed: list[Placed], category: str, room,
                         rng: np.random.Generator, tries: int = 50) -> Placed | None:
    dx, dy, _ = RECEPTACLE_SHAPES[canonical(category)]
    for _ in range(tries):
        rot = int(rng.integers(4))
        fx, fy = (dx, dy) if rot % 2 == 0 else (dy, dx)
        if fx > room[0] - 2 * WALL_GAP or fy > room[1] - 2 * WALL_GAP:
            continue
        x = _snap(float(rng.uniform(WALL_GAP, room[0] - WALL_GAP - fx)), fx, room[0])
        y = _snap(float(rng.uniform(WALL_GAP, room[1] - WALL_GAP - fy)), fy, room[1])
        # quantize to the voxel grid so footprints are exact
        r = b.resolution
        x, y = round(x / r) * r, round(y / r) * r
        if _fits(placed, (x, y), (x + fx, y + fy), room):
            p = add_receptacle(b, category, x, y, rot)
            placed.append(p)
            return p
    return None


# ---------------------------------------------------------------- episodes


@dataclass(frozen=True)
class Episode:
    episode_id: str
    scene_file: str
    start_pose: dict
    category: str
    seed: int
    difficulty: str = "mixed"

    def start_state(self) -> AgentState:
        p = self.start_pose
        kw = {k: float(p[k]) for k in ("camera_height", "tilt") if k in p}
        return AgentState(float(p["x"]), float(p["y"]), float(p.get("heading", 0.0)), **kw)

    def to_dict(self) -> dict:
        return {"episode_id": self.episode_id, "scene_file": self.scene_file,
                "start_pose": dict(self.start_pose), "category": self.category,
                "seed": self.seed, "difficulty": self.difficulty}

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        return cls(str(d["episode_id"]), str(d["scene_file"]), dict(d["start_pose"]),
                   str(d["category"]), int(d.get("seed", 0)), str(d.get("difficulty", "mixed")))


def write_episodes(episodes, path) -> None:
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_dict(), sort_keys=True) + "\n")


def read_episodes(path) -> list[Episode]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(Episode.from_dict(json.loads(line)))
    return out


def episode_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _random_start(scene: SceneSpec, rng: np.random.Generator, accept=None, tries: int = 2000):
    lo = scene.origin_array[:2] + 0.3
    hi = scene.extent[:2] - 0.3
    for _ in range(tries):
        x, y = (round(float(v), 3) for v in rng.uniform(lo, hi))
        heading = 30.0 * int(rng.integers(12))
        st = AgentState(x, y, heading)
        if not state_is_free(scene, st, radius=0.25):
            continue
        if accept is not None and not accept(st):
            continue
        return st
    return None


def _surface_distance(p: Placed, x: float, y: float) -> float:
    d = math.inf
    for x0, y0, x1, y1, _ in p.tops:
        dx = max(x0 - x, 0.0, x - x1)
        dy = max(y0 - y, 0.0, y - y1)
        d = min(d, math.hypot(dx, dy))
    return d


# categories with a valid receptacle in the evaluation table, and the receptacles we can build for each
def valid_hosts(category: str, priors: dict) -> list[str]:
    row = priors.get(canonical(category), [])
    out = []
    for r in row:
        c = canonical(r)
        if c in RECEPTACLE_SHAPES and c not in out and host_fits(c, category):
            out.append(c)
    return out


def host_fits(receptacle: str, category: str) -> bool:
    b = SceneBuilder((3.0, 3.0), 1.5)
    p = add_receptacle(b, receptacle, 0.5, 0.5, 0)
    fx, fy = FOOTPRINTS[canonical(category)]
    for x0, y0, x1, y1, _ in p.tops:
        w, h = x1 - x0, y1 - y0
        if (w >= fx - 1e-9 and h >= fy - 1e-9) or (w >= fy - 1e-9 and h >= fx - 1e-9):
            return True
    return False


def make_easy_episode(index: int, seed: int, priors: dict, room_range=(4.5, 5.0),
                      max_start_dist: float = 2.0) -> tuple[SceneSpec, Episode]:
    """One room, one uncluttered valid receptacle within ``max_start_dist`` of the start."""
    rng = episode_rng(seed, index)
    cats = sorted(c for c in priors if valid_hosts(c, priors))
    while True:
        category = cats[int(rng.integers(len(cats)))]
        hosts = valid_hosts(category, priors)
        host = hosts[int(rng.integers(len(hosts)))]
        room = tuple(float(round(rng.uniform(*room_range), 1)) for _ in range(2))
        b = SceneBuilder(room, 2.5, name=f"easy-{seed}-{index:04d}")
        b.add_room()
        placed: list[Placed] = []
        p = try_place_receptacle(b, placed, host, room, rng)
        if p is None:
            continue
        scene = b.build()
        st = _random_start(scene, rng, lambda s: 0.5 <= _surface_distance(p, s.x, s.y) <= max_start_dist)
        if st is None:
            continue
        ep = Episode(f"easy-{index:04d}", f"{b.name}.json", st.to_dict(),
                     category, int(rng.integers(2**31)), "easy")
        return scene, ep


def make_mixed_scene(index: int, seed: int, room_range=(4.5, 6.5), n_receptacles=(2, 4),
                     n_objects=(0, 4), object_categories=None, host_priors: dict | None = None,
                     valid_host_p: float = 0.8) -> tuple[SceneSpec, np.random.Generator]:
    """Room with random furniture and objects.

    With ``host_priors`` each object lands on a receptacle its row names
    (when the room has one) with probability ``valid_host_p``.
    """
    from ..categories import TARGET_CATEGORIES

    rng = episode_rng(seed, index)
    room = tuple(float(round(rng.uniform(*room_range), 1)) for _ in range(2))
    b = SceneBuilder(room, 2.5, name=f"scene-{seed}-{index:04d}")
    b.add_room()
    placed: list[Placed] = []
    names = sorted(RECEPTACLE_SHAPES)
    for _ in range(int(rng.integers(n_receptacles[0], n_receptacles[1] + 1))):
        try_place_receptacle(b, placed, names[int(rng.integers(len(names)))], room, rng)
    objs = list(object_categories or TARGET_CATEGORIES)
    if placed:
        for _ in range(int(rng.integers(n_objects[0], n_objects[1] + 1))):
            cat = objs[int(rng.integers(len(objs)))]
            hosts = placed
            if host_priors is not None and rng.random() < valid_host_p:
                good = set(valid_hosts(cat, host_priors))
                hosts = [p for p in placed if p.category in good] or placed
            add_object(b, cat, hosts[int(rng.integers(len(hosts)))], rng)
    return b.build(), rng


def make_mixed_episode(index: int, seed: int, priors: dict | None = None, **kw) -> tuple[SceneSpec, Episode]:
    """Cluttered room; the goal category is any target with a row in ``priors`` (all targets if None)."""
    from ..categories import TARGET_CATEGORIES

    scene, rng = make_mixed_scene(index, seed, host_priors=priors, **kw)
    cats = [c for c in TARGET_CATEGORIES if priors is None or c in priors]
    category = cats[int(rng.integers(len(cats)))]
    st = _random_start(scene, rng)
    if st is None:  # pragma: no cover - rooms always leave free floor
        raise RuntimeError("no free start pose")
    ep = Episode(f"mixed-{index:04d}", f"{scene.name}.json", st.to_dict(),
                 category, int(rng.integers(2**31)), "mixed")
    return scene, ep
