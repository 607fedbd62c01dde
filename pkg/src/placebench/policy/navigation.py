"""Grid planning, frontier exploration, goal selection and goal-directed navigation."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace

import numba
import numpy as np
from scipy import ndimage

from ..geometry import connected_components
from ..scenesim.agent import AgentState, NavAction, step, sweep_collides
from .config import PolicyConfig
from .spmap import SPMap2D

SQRT2 = math.sqrt(2.0)


def inflate(blocked: np.ndarray, radius: float, resolution: float) -> np.ndarray:
    """Cells whose center lies within ``radius`` of a blocked cell's square."""
    k = int(math.ceil(radius / resolution + 0.5))
    d = np.arange(-k, k + 1, dtype=float)
    gx = np.maximum(np.abs(d)[:, None] - 0.5, 0.0)
    gy = np.maximum(np.abs(d)[None, :] - 0.5, 0.0)
    kernel = (gx ** 2 + gy ** 2) * resolution ** 2 < radius ** 2
    return ndimage.binary_dilation(blocked, structure=kernel)


@numba.njit(cache=True)
def _dijkstra(passable, sources):
    """Octile-cost distances from every source cell over 8-connected passable cells, no corner cutting."""
    nx, ny = passable.shape
    dist = np.full((nx, ny), np.inf)
    parent = np.full((nx, ny), -1, dtype=np.int64)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for s in range(sources.shape[0]):
        si = sources[s, 0]
        sj = sources[s, 1]
        dist[si, sj] = 0.0
        heap.append((0.0, si * ny + sj))
    heapq.heapify(heap)
    di = (1, -1, 0, 0, 1, 1, -1, -1)
    dj = (0, 0, 1, -1, 1, -1, 1, -1)
    while len(heap) > 0:
        d, idx = heapq.heappop(heap)
        i = idx // ny
        j = idx % ny
        if d > dist[i, j]:
            continue
        for n in range(8):
            a = i + di[n]
            b = j + dj[n]
            if a < 0 or b < 0 or a >= nx or b >= ny or not passable[a, b]:
                continue
            if n >= 4 and (not passable[a, j] or not passable[i, b]):
                continue
            nd = d + (1.0 if n < 4 else 1.4142135623730951)
            if nd < dist[a, b] - 1e-12:
                dist[a, b] = nd
                parent[a, b] = idx
                heapq.heappush(heap, (nd, a * ny + b))
    return dist, parent


def shortest_paths(passable: np.ndarray, start) -> tuple[np.ndarray, np.ndarray]:
    """Path costs (in cells) and parent links from ``start``."""
    p = np.ascontiguousarray(passable, dtype=np.bool_)
    return _dijkstra(p, np.array([[int(start[0]), int(start[1])]], dtype=np.int64))


def cost_to_go(passable: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Path cost from every cell to the nearest target cell."""
    src = np.argwhere(targets & passable).astype(np.int64)
    if len(src) == 0:
        return np.full(passable.shape, np.inf)
    return _dijkstra(np.ascontiguousarray(passable, dtype=np.bool_), src)[0]


def extract_path(parent: np.ndarray, goal) -> list[tuple[int, int]]:
    ny = parent.shape[1]
    path = [(int(goal[0]), int(goal[1]))]
    idx = parent[goal[0], goal[1]]
    while idx >= 0:
        path.append((int(idx // ny), int(idx % ny)))
        idx = parent[path[-1]]
    return path[::-1]


def nearest_target(dist: np.ndarray, targets: np.ndarray):
    """Lowest-cost reachable target cell; ties go to the lowest (i, j)."""
    d = np.where(targets, dist, np.inf)
    best = d.min(initial=np.inf)
    if not np.isfinite(best):
        return None
    cand = np.argwhere(d <= best + 1e-9)
    return tuple(int(v) for v in cand[0])  # argwhere is row-major, so this is the lowest (i, j)


def frontier_cells(m: SPMap2D) -> np.ndarray:
    """Explored free cells with an unexplored 4-neighbor."""
    free = m.free
    unexp = ~m.explored
    nb = np.zeros_like(unexp)
    nb[1:, :] |= unexp[:-1, :]
    nb[:-1, :] |= unexp[1:, :]
    nb[:, 1:] |= unexp[:, :-1]
    nb[:, :-1] |= unexp[:, 1:]
    return free & nb


def heading_to(state: AgentState, x: float, y: float) -> float:
    return math.degrees(math.atan2(y - state.y, x - state.x))


def angle_diff(a: float, b: float) -> float:
    """Signed smallest difference a - b in degrees, in (-180, 180]."""
    d = (a - b) % 360.0
    return d - 360.0 if d > 180.0 else d


@dataclass(frozen=True)
class Plan:
    action: NavAction
    target: tuple[int, int] | None
    path: tuple[tuple[int, int], ...] = ()


def lattice_action(m: SPMap2D, state: AgentState, cost: np.ndarray, cfg: PolicyConfig,
                   done=None) -> NavAction | None:
    """Best first action among "turn k times then step forward" for the 12 reachable headings.

    A heading is scored by the cost-to-go at the cell its forward step lands in
    (``done(x, y)`` marks landing spots that finish the task).  Steps whose swept
    footprint meets a blocked map cell are never considered.  Returns None when
    no heading improves on the current cell.
    """
    here = m.cell_of(state.x, state.y)
    c0 = cost[here] if m.in_bounds(*here) else np.inf
    best_key, best_k = None, None
    for k in range(12):
        turns = min(k, 12 - k)
        th = math.radians(state.heading + 30.0 * k)
        x = state.x + 0.25 * math.cos(th)
        y = state.y + 0.25 * math.sin(th)
        if sweep_collides(m.blocked, m.origin_xy, m.resolution, (state.x, state.y), (x, y), cfg.base_radius):
            continue
        if done is not None and done(x, y):
            v = -1.0
        else:
            cell = m.cell_of(x, y)
            v = cost[cell] if m.in_bounds(*cell) else np.inf
        if not np.isfinite(v) or not (v < c0 - 1.0 or v < 0):
            continue
        key = (v + 0.5 * turns, turns, k)
        if best_key is None or key < best_key:
            best_key, best_k = key, k
    if best_k is None:
        return None
    if best_k == 0:
        return NavAction.MOVE_FORWARD
    return NavAction.TURN_LEFT if best_k <= 6 else NavAction.TURN_RIGHT


def passable_cells(m: SPMap2D, cfg: PolicyConfig, unknown_free: bool, margin: float | None = None) -> np.ndarray:
    margin = cfg.inflation_margin if margin is None else margin
    blocked = inflate(m.blocked, cfg.base_radius + margin, m.resolution)
    ok = ~blocked
    if not unknown_free:
        ok &= m.explored
    return ok


def frontier_plan(m: SPMap2D, state: AgentState, cfg: PolicyConfig = PolicyConfig(),
                  exclude=None) -> Plan:
    """Nearest reachable frontier by path cost (ties to the lowest cell) and the action toward it."""
    start = m.cell_of(state.x, state.y)
    if not m.in_bounds(*start):
        return Plan(NavAction.TURN_LEFT, None)
    # unknown cells count as traversable: the floor right in front of the head camera is never in view
    passable = passable_cells(m, cfg, unknown_free=True)
    passable[start] = True
    dist, parent = shortest_paths(passable, start)
    targets = frontier_cells(m) & passable
    targets &= dist * m.resolution >= cfg.min_frontier_dist
    if exclude is not None:
        targets &= ~exclude
    goal = nearest_target(dist, targets)
    if goal is None:
        return Plan(NavAction.TURN_LEFT, None)
    path = extract_path(parent, goal)
    tgt = np.zeros(m.shape, dtype=bool)
    tgt[goal] = True
    action = lattice_action(m, state, cost_to_go(passable, tgt), cfg)
    return Plan(action or NavAction.TURN_LEFT, goal, tuple(path))


def frontier_step(m: SPMap2D, state: AgentState, cfg: PolicyConfig = PolicyConfig(), exclude=None) -> NavAction:
    """Next action toward the nearest reachable frontier, or TurnLeft when there is none."""
    return frontier_plan(m, state, cfg, exclude).action


# ------------------------------------------------------------------ goals


@dataclass(frozen=True)
class GoalRegion:
    cell: tuple[int, int]  # centroid cell
    cells: np.ndarray  # (n, 2) cells of the component
    area: int

    @classmethod
    def single(cls, cell) -> "GoalRegion":
        c = (int(cell[0]), int(cell[1]))
        return cls(c, np.array([c], dtype=np.int64), 1)


def select_goal(m: SPMap2D, connectivity: int = 8) -> GoalRegion | None:
    """Centroid cell of the largest evidence component; ties go to the lowest min cell."""
    regions = connected_components(m.evidence > 0, connectivity)
    if len(regions) == 0:
        return None
    best = None
    for mask in regions:
        cells = np.argwhere(mask)
        key = (-len(cells), tuple(cells[0]))  # cells[0] is the lexicographically lowest cell
        if best is None or key < best[0]:
            best = (key, cells)
    cells = best[1]
    c = cells.mean(axis=0)
    cell = (int(np.floor(c[0] + 0.5)), int(np.floor(c[1] + 0.5)))
    return GoalRegion(cell, cells, len(cells))


def goal_distance(state: AgentState, goal: GoalRegion, origin_xy, resolution: float,
                  base_radius: float) -> float:
    """Gap between the base footprint and the nearest goal cell center."""
    centers = np.asarray(origin_xy) + (goal.cells + 0.5) * resolution
    d = np.hypot(centers[:, 0] - state.x, centers[:, 1] - state.y).min()
    return max(0.0, float(d) - base_radius)


def _goal_targets(shape, goal: GoalRegion, resolution: float, within: float) -> np.ndarray:
    g = np.ones(shape, dtype=bool)
    g[goal.cells[:, 0], goal.cells[:, 1]] = False
    return ndimage.distance_transform_edt(g) * resolution <= within


@dataclass
class NavOutcome:
    state: AgentState
    reached: bool
    steps: int
    sp_map: SPMap2D | None = None


def navigate_to(scene, state: AgentState, goal, reach_dist: float = 0.2,
                cfg: PolicyConfig = PolicyConfig(), sp_map: SPMap2D | None = None,
                observe=None, trace=None, max_steps: int | None = None) -> NavOutcome:
    """Drive until the base is within ``reach_dist`` of the goal or the step budget runs out.

    Plans on ``sp_map`` (unknown cells treated as free) when given, otherwise on
    the scene's true obstacle map.  ``observe(state, map) -> map`` refreshes the
    map after every action.
    """
    if not isinstance(goal, GoalRegion):
        goal = GoalRegion.single(goal)
    if sp_map is None:
        known = SPMap2D.for_scene(scene)
        obst = scene.obstacle_map(cfg.robot_height)
        sp_map = replace(known, explored=np.ones(known.shape, bool), occupied=obst.copy())
    m = sp_map

    def dist_now(s):
        return goal_distance(s, goal, m.origin_xy, m.resolution, cfg.base_radius)

    if dist_now(state) <= reach_dist:
        return NavOutcome(state, True, 0, m)
    targets = _goal_targets(m.shape, goal, m.resolution, cfg.base_radius + reach_dist - 0.5 * m.resolution)

    def done(x, y):
        return goal_distance(AgentState(x, y), goal, m.origin_xy, m.resolution, cfg.base_radius) <= reach_dist

    def costs(s, mm):
        passable = passable_cells(mm, cfg, unknown_free=True, margin=0.0)
        here = mm.cell_of(s.x, s.y)
        if mm.in_bounds(*here):
            passable[here] = True
        return cost_to_go(passable, targets)

    cost = costs(state, m)
    here = m.cell_of(state.x, state.y)
    if not m.in_bounds(*here) or not np.isfinite(cost[here]):
        return NavOutcome(state, False, 0, m)
    est = int(math.ceil(cost[here] * m.resolution / 0.25)) + 6
    budget = max(cfg.nav_budget_min, int(cfg.nav_budget_factor * est))
    if max_steps is not None:
        budget = min(budget, max_steps)
    steps = 0
    while steps < budget:
        if steps:
            cost = costs(state, m)
        action = lattice_action(m, state, cost, cfg, done) or NavAction.TURN_LEFT
        new, collided = step(scene, state, action, cfg.base_radius)
        steps += 1
        if collided:
            m = m.with_bump(_bump_cells(m, state, cfg))
        state = new
        if observe is not None:
            m = observe(state, m)
        if trace is not None:
            trace.append((action.value, state, m))
        if dist_now(state) <= reach_dist:
            return NavOutcome(state, True, steps, m)
    return NavOutcome(state, dist_now(state) <= reach_dist, steps, m)


def _bump_cells(m: SPMap2D, state: AgentState, cfg: PolicyConfig):
    th = math.radians(state.heading)
    out = []
    for ahead in (cfg.base_radius + 0.5 * m.resolution, cfg.base_radius + 1.5 * m.resolution):
        x = state.x + ahead * math.cos(th)
        y = state.y + ahead * math.sin(th)
        out.append(m.cell_of(x, y))
    return out
