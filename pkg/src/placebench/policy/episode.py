"""Episode runner: explore, navigate to the best SP region, then scan, approach and place."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..scenesim.agent import AgentState, step
from .config import PolicyConfig
from .navigation import _bump_cells, frontier_plan, navigate_to, select_goal
from .place import (
    _look, approach_and_place, choose_placement, judge_success, look_down, panoramic_place_scan,
    support_instance,
)
from .spmap import SPMap2D, update_sp_map

log = logging.getLogger(__name__)

NONE, NAV, PLACE, BAD_MASK = "none", "nav_failure", "place_failure", "bad_sp_mask"
FAILURE_MODES = (NONE, NAV, PLACE, BAD_MASK)
ERRORED = "errored"

_STUCK_LIMIT = 12  # actions without moving before a frontier is abandoned


@dataclass
class EpisodeResult:
    episode_id: str
    success: bool
    failure_mode: str
    steps: int
    placement: list[float] | None = None
    support: str | None = None
    reason: str = ""
    trace_hash: str = ""
    explore_steps: int = 0

    def __post_init__(self):
        if self.failure_mode not in FAILURE_MODES + (ERRORED,):
            raise ValueError(f"unknown failure mode {self.failure_mode!r}")
        if self.success != (self.failure_mode == NONE):
            raise ValueError("success must coincide with failure_mode == 'none'")

    def to_dict(self) -> dict:
        return {"episode_id": self.episode_id, "success": self.success,
                "failure_mode": self.failure_mode, "steps": self.steps,
                "placement": self.placement, "support": self.support, "reason": self.reason,
                "trace_hash": self.trace_hash, "explore_steps": self.explore_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeResult":
        return cls(**d)


class Trace:
    """Per-action record (action, pose, SP-map digest) with a running hash."""

    def __init__(self, keep: bool = False):
        self._h = hashlib.sha256()
        self.keep = keep
        self.rows: list[dict] = []
        self._last_digest = ""

    def append(self, item):
        action, state, m = item
        if m is not None:
            self._last_digest = m.digest()
        row = {"action": action, "x": round(state.x, 9), "y": round(state.y, 9),
               "heading": round(state.heading, 9), "tilt": state.tilt, "map": self._last_digest}
        self._h.update(json.dumps(row, sort_keys=True).encode())
        if self.keep:
            self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def hexdigest(self) -> str:
        return self._h.hexdigest()[:16]


def _observer(scene, predictor, category, cfg):
    def update(state: AgentState, m: SPMap2D) -> SPMap2D:
        obs = _look(scene, state, cfg)
        heat = predictor.predict(obs, category)
        return update_sp_map(m, heat, obs.depth, obs.camera, cfg.tau, cfg.min_area, cfg.robot_height,
                             cfg.base_radius)
    return update


def explore(scene, state: AgentState, m: SPMap2D, update, cfg: PolicyConfig, trace=None):
    """Frontier exploration for up to ``cfg.explore_steps`` actions."""
    exclude = np.zeros(m.shape, dtype=bool)
    steps = 0
    idle = 0
    no_target = 0
    last_target = None
    while steps < cfg.explore_steps:
        plan = frontier_plan(m, state, cfg, exclude)
        if plan.target is None:
            # nothing reachable left: a full turn in place, then stop
            no_target += 1
            if cfg.stop_when_explored and no_target > 12:
                break
        else:
            no_target = 0
        if plan.target != last_target:
            idle = 0
            last_target = plan.target
        new, collided = step(scene, state, plan.action, cfg.base_radius)
        steps += 1
        if collided:
            m = m.with_bump(_bump_cells(m, state, cfg))
        moved = (new.x, new.y) != (state.x, state.y)
        idle = 0 if moved else idle + 1
        state = new
        m = update(state, m)
        if trace is not None:
            trace.append((plan.action.value, state, m))
        if idle >= _STUCK_LIMIT and plan.target is not None:
            i, j = plan.target
            exclude[max(0, i - 3):i + 4, max(0, j - 3):j + 4] = True
            idle = 0
    return state, m, steps


def run_episode(scene, episode, predictor, cfg: PolicyConfig = PolicyConfig(), seed: int | None = None,
                keep_trace: bool = False) -> tuple[EpisodeResult, Trace]:
    """Run one episode.  The policy is deterministic; ``seed`` is recorded for bookkeeping."""
    category = episode.category
    state = episode.start_state()
    trace = Trace(keep_trace)
    update = _observer(scene, predictor, category, cfg)
    m = update(state, SPMap2D.for_scene(scene))
    steps = 0

    def result(mode, reason, placement=None, support=None):
        return EpisodeResult(episode.episode_id, mode == NONE, mode, steps,
                             None if placement is None else [round(float(v), 6) for v in placement],
                             support, reason, trace.hexdigest(), explore_steps), trace

    state, m, explore_steps = explore(scene, state, m, update, cfg, trace)
    steps += explore_steps

    goal = select_goal(m)
    if goal is None:
        return result(NAV, "no SP evidence on the map")
    nav = navigate_to(scene, state, goal, cfg.goal_reach_dist, cfg, sp_map=m, observe=update, trace=trace)
    steps += nav.steps
    state, m = nav.state, nav.sp_map
    if not nav.reached:
        return result(NAV, "goal not reached")

    state, n = look_down(scene, state, cfg, trace)
    steps += n
    scan, state, n = panoramic_place_scan(scene, state, predictor, category, cfg, trace)
    steps += n
    if scan is None:
        return result(BAD_MASK, "no SP prediction above the floor in the scan")
    target = choose_placement(scan.points, cfg)
    out = approach_and_place(scene, state, target, cfg, predictor, category, trace)
    steps += out.steps
    if out.reason == "blocked":
        return result(NAV, "approach blocked")
    if out.placed is None:
        return result(PLACE, "placement out of reach")
    owner = support_instance(scene, out.placed)
    support = scene.instance(owner).category if owner else None
    if judge_success(scene, out.placed, category):
        return result(NONE, "placed", out.placed, support)
    return result(BAD_MASK, "placed on an invalid surface", out.placed, support)


# ------------------------------------------------------------------ summaries

_LABELS = {NAV: "Navigation Failure", PLACE: "Place Failure", BAD_MASK: "Incorrect SP Mask"}


@dataclass
class Summary:
    n: int
    successes: int
    counts: dict = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.successes / self.n if self.n else float("nan")

    def failure_shares(self) -> dict:
        failed = sum(self.counts.get(k, 0) for k in (NAV, PLACE, BAD_MASK))
        return {k: (100.0 * self.counts.get(k, 0) / failed if failed else 0.0) for k in (NAV, PLACE, BAD_MASK)}

    def format(self) -> str:
        shares = self.failure_shares()
        lines = [f"Success: {100.0 * self.success_rate:.1f}% ({self.successes}/{self.n})"]
        for k in (NAV, PLACE, BAD_MASK):
            lines.append(f"{_LABELS[k]}: {shares[k]:.1f}% of failures ({self.counts.get(k, 0)})")
        if self.counts.get(ERRORED):
            lines.append(f"Errored: {self.counts[ERRORED]}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"n": self.n, "successes": self.successes, "success_rate": self.success_rate,
                "counts": dict(sorted(self.counts.items())), "failure_shares": self.failure_shares()}


def summarize(results) -> Summary:
    counts = {k: 0 for k in FAILURE_MODES}
    for r in results:
        counts[r.failure_mode] = counts.get(r.failure_mode, 0) + 1
    return Summary(len(results), counts[NONE], counts)


def results_digest(results) -> str:
    h = hashlib.sha256()
    for r in sorted(results, key=lambda r: r.episode_id):
        h.update(json.dumps(r.to_dict(), sort_keys=True).encode())
    return h.hexdigest()
