"""Place phase: panoramic scan, slab scoring, approach, drop and success judgment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ..geometry import CameraModel, PointCloud
from ..predict import priors
from ..predict.base import Observation, observe
from ..scenesim.agent import AgentState, NavAction, camera_for, step
from ..scenesim.surfaces import MIN_CLEARANCE, surface_owner_grid
from .config import PolicyConfig
from .navigation import angle_diff, heading_to
from .spmap import sp_points


def to_base_frame(points: np.ndarray, state: AgentState) -> np.ndarray:
    """World points in the base frame: x forward, y left, z up from the floor."""
    th = math.radians(state.heading)
    c, s = math.cos(th), math.sin(th)
    d = np.asarray(points, dtype=np.float64) - np.array([state.x, state.y, 0.0])
    return np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]], axis=1)


@dataclass(frozen=True)
class ScanResult:
    points: PointCloud  # world frame, sorted by horizontal distance from the base
    base_points: np.ndarray
    depth: np.ndarray
    camera: CameraModel
    state: AgentState
    turns: int


def valid_sp_points(heat, obs: Observation, state: AgentState, cfg: PolicyConfig):
    """SP points above the floor band, ordered nearest-first; None when nothing survives."""
    pc = sp_points(heat, obs.depth, obs.camera, cfg.tau, cfg.min_area)
    if len(pc) == 0:
        return None
    base = to_base_frame(pc.points, state)
    keep = base[:, 2] > cfg.floor_height_cutoff
    if not keep.any():
        return None
    pts, base = pc.points[keep], base[keep]
    order = np.lexsort((np.arange(len(base)), np.round(np.hypot(base[:, 0], base[:, 1]), 9)))
    return PointCloud(pts[order]), base[order]


def _look(scene, state, cfg):
    return observe(scene, camera_for(state, cfg.image_size, cfg.hfov_deg))


def panoramic_place_scan(scene, state: AgentState, predictor, category: str,
                         cfg: PolicyConfig = PolicyConfig(), trace=None) -> tuple[ScanResult | None, AgentState, int]:
    """Turn in place until a frame yields SP points above the floor.

    Returns ``(result or None, final state, actions taken)``.
    """
    steps = 0
    for k in range(cfg.scan_turns):
        obs = _look(scene, state, cfg)
        found = valid_sp_points(predictor.predict(obs, category), obs, state, cfg)
        if found is not None:
            return ScanResult(found[0], found[1], obs.depth, obs.camera, state, k), state, steps
        state, _ = step(scene, state, NavAction.TURN_LEFT)
        steps += 1
        if trace is not None:
            trace.append((NavAction.TURN_LEFT.value, state, None))
    return None, state, steps


@numba.njit(cache=True)
def _slab_scores(p, r2, tol):
    n = p.shape[0]
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        c = 0
        for j in range(n):
            dx = p[j, 0] - p[i, 0]
            dy = p[j, 1] - p[i, 1]
            if dx * dx + dy * dy <= r2 and abs(p[j, 2] - p[i, 2]) <= tol:
                c += 1
        out[i] = c
    return out


def _tol(cfg):
    # small slack so spacing that lands exactly on the radius is not lost to rounding
    return cfg.slab_xy_radius ** 2 * (1 + 1e-12), cfg.slab_height_tol * (1 + 1e-12)


def slab_scores(points, cfg: PolicyConfig = PolicyConfig()) -> np.ndarray:
    p = np.ascontiguousarray(_as_points(points), dtype=np.float64)
    r2, tol = _tol(cfg)
    return _slab_scores(p, r2, tol)


def slab_score(points, i: int, cfg: PolicyConfig = PolicyConfig()) -> int:
    """Neighbors of point ``i`` (itself included) in the flat cylinder around it."""
    p = _as_points(points)
    r2, tol = _tol(cfg)
    d = p - p[i]
    return int(np.count_nonzero((d[:, 0] ** 2 + d[:, 1] ** 2 <= r2) & (np.abs(d[:, 2]) <= tol)))


def _as_points(points) -> np.ndarray:
    return points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)


def choose_placement(points, cfg: PolicyConfig = PolicyConfig()) -> np.ndarray:
    """Point with the highest slab score; ties favor the point nearest its neighborhood centroid."""
    p = _as_points(points)
    if len(p) == 0:
        raise ValueError("cannot choose a placement from an empty cloud")
    scores = slab_scores(p, cfg)
    top = np.flatnonzero(scores == scores.max())
    if len(top) == 1:
        return p[top[0]].copy()
    r2, tol = _tol(cfg)
    best, best_key = None, None
    for i in top:
        d = p - p[i]
        nb = (d[:, 0] ** 2 + d[:, 1] ** 2 <= r2) & (np.abs(d[:, 2]) <= tol)
        off = float(np.linalg.norm(p[nb].mean(axis=0) - p[i]))
        key = (round(off, 9), int(i))
        if best_key is None or key < best_key:
            best, best_key = i, key
    return p[best].copy()


# ------------------------------------------------------------------ approach and drop


def horizontal_distance(state: AgentState, target) -> float:
    return math.hypot(target[0] - state.x, target[1] - state.y)


def within_reach(state: AgentState, target, cfg: PolicyConfig) -> bool:
    d = horizontal_distance(state, target)
    return cfg.reach_min <= d <= cfg.reach_max and cfg.reach_z_min <= target[2] <= cfg.reach_z_max


def drop_point(scene, target, drop_height: float = 0.15) -> np.ndarray | None:
    """Where an object released ``drop_height`` above ``target`` comes to rest."""
    x, y, z = (float(v) for v in target)
    i, j, k = scene.world_to_cell((x, y, z + drop_height))
    if not (0 <= i < scene.dims[0] and 0 <= j < scene.dims[1]):
        return None
    k = min(int(k), scene.dims[2] - 1)
    column = scene.occupied[i, j, : k + 1]
    hits = np.flatnonzero(column)
    if len(hits) == 0:
        return None
    top = scene.origin[2] + (hits[-1] + 1) * scene.resolution
    return np.array([x, y, top])


def face(scene, state: AgentState, target, cfg: PolicyConfig, trace=None) -> tuple[AgentState, int]:
    steps = 0
    for _ in range(6):
        err = angle_diff(heading_to(state, target[0], target[1]), state.heading)
        if abs(err) <= cfg.turn_tolerance_deg:
            break
        a = NavAction.TURN_LEFT if err > 0 else NavAction.TURN_RIGHT
        state, _ = step(scene, state, a)
        steps += 1
        if trace is not None:
            trace.append((a.value, state, None))
    return state, steps


@dataclass(frozen=True)
class PlaceOutcome:
    placed: np.ndarray | None
    state: AgentState
    steps: int
    reason: str  # placed | blocked | unreachable
    target: np.ndarray | None = None


def approach_and_place(scene, state: AgentState, target, cfg: PolicyConfig = PolicyConfig(),
                       predictor=None, category: str | None = None, trace=None) -> PlaceOutcome:
    """Face the target, close in to ``approach_dist`` while re-estimating, then drop if in reach."""
    target = np.asarray(target, dtype=np.float64)
    steps = 0
    state, n = face(scene, state, target, cfg, trace)
    steps += n
    collided = False
    for _ in range(cfg.max_approach_steps):
        if horizontal_distance(state, target) <= cfg.approach_dist:
            break
        state, collided = step(scene, state, NavAction.MOVE_FORWARD, cfg.base_radius)
        steps += 1
        if trace is not None:
            trace.append((NavAction.MOVE_FORWARD.value, state, None))
        if collided:
            break
        if predictor is not None:
            obs = _look(scene, state, cfg)
            found = valid_sp_points(predictor.predict(obs, category), obs, state, cfg)
            if found is not None:
                target = choose_placement(found[0], cfg)
        state, n = face(scene, state, target, cfg, trace)
        steps += n
    if not within_reach(state, target, cfg):
        # bumping into the receptacle that holds the target means the arm is too short, not a blocked path
        blocked = collided and bool(blockers(scene, state, cfg) - {support_cell_instance(scene, target)})
        return PlaceOutcome(None, state, steps, "blocked" if blocked else "unreachable", target)
    placed = drop_point(scene, target, cfg.drop_height)
    if placed is None:
        return PlaceOutcome(None, state, steps, "unreachable", target)
    return PlaceOutcome(placed, state, steps, "placed", target)


def blockers(scene, state: AgentState, cfg: PolicyConfig) -> set[int]:
    """Instances met by the swept base footprint of a forward step from ``state``."""
    th = math.radians(state.heading)
    res = scene.resolution
    n = int(math.ceil(0.25 / (0.25 * res)))
    f = np.linspace(0.0, 1.0, n + 1)
    xs = state.x + f * 0.25 * math.cos(th)
    ys = state.y + f * 0.25 * math.sin(th)
    k_lo = int(math.floor(-scene.origin[2] / res + 1e-9))
    k_hi = min(scene.dims[2], int(math.ceil((cfg.robot_height - scene.origin[2]) / res - 1e-9)))
    r = cfg.base_radius
    i0 = max(0, int(math.floor((xs.min() - r - scene.origin[0]) / res)))
    i1 = min(scene.dims[0], int(math.floor((xs.max() + r - scene.origin[0]) / res)) + 1)
    j0 = max(0, int(math.floor((ys.min() - r - scene.origin[1]) / res)))
    j1 = min(scene.dims[1], int(math.floor((ys.max() + r - scene.origin[1]) / res)) + 1)
    out: set[int] = set()
    for i in range(i0, i1):
        for j in range(j0, j1):
            col = scene.grid[i, j, k_lo:k_hi]
            if not col.any():
                continue
            lo_x, lo_y = scene.origin[0] + i * res, scene.origin[1] + j * res
            qx = np.clip(xs, lo_x, lo_x + res)
            qy = np.clip(ys, lo_y, lo_y + res)
            if np.any((qx - xs) ** 2 + (qy - ys) ** 2 < r * r):
                out.update(int(v) for v in np.unique(col[col > 0]))
    return out


def support_cell_instance(scene, target) -> int:
    """Instance occupying the cell just below ``target``, or 0."""
    below = np.asarray(target, dtype=np.float64) - np.array([0.0, 0.0, 0.5 * scene.resolution])
    idx = scene.world_to_cell(below)
    return int(scene.grid[tuple(idx)]) if scene.in_bounds(idx) else 0


def support_instance(scene, placed, min_clearance: int = MIN_CLEARANCE) -> int:
    """Receptacle whose placeable surface holds ``placed``, or 0."""
    below = np.asarray(placed, dtype=np.float64) - np.array([0.0, 0.0, 0.5 * scene.resolution])
    idx = scene.world_to_cell(below)
    if not scene.in_bounds(idx):
        return 0
    return int(surface_owner_grid(scene, min_clearance)[tuple(idx)])


def judge_success(scene, placed, category: str, table=None, min_clearance: int = MIN_CLEARANCE) -> bool:
    """True when the object rests on a placeable surface of a receptacle named for ``category``."""
    if placed is None:
        return False
    table = table if table is not None else priors.load_table(priors.EVAL)
    owner = support_instance(scene, placed, min_clearance)
    if owner == 0:
        return False
    return scene.instance(owner).category in priors.receptacles(table, category)


def look_down(scene, state: AgentState, cfg: PolicyConfig, trace=None) -> tuple[AgentState, int]:
    """Tilt the head toward ``cfg.place_tilt`` in the fixed increments."""
    steps = 0
    while state.tilt - cfg.place_tilt > 1e-9:
        new, _ = step(scene, state, NavAction.LOOK_DOWN)
        if new.tilt == state.tilt:
            break
        state = new
        steps += 1
        if trace is not None:
            trace.append((NavAction.LOOK_DOWN.value, state, None))
    return state, steps


__all__ = [
    "ScanResult", "PlaceOutcome", "panoramic_place_scan", "slab_score", "slab_scores",
    "choose_placement", "approach_and_place", "judge_success", "drop_point", "to_base_frame",
    "within_reach", "look_down", "support_instance", "blockers",
]
