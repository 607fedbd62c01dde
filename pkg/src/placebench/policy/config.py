"""Policy parameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass(frozen=True)
class PolicyConfig:
    explore_steps: int = 250
    goal_reach_dist: float = 0.2
    approach_dist: float = 0.385
    slab_height_tol: float = 0.03
    slab_xy_radius: float = 0.10
    drop_height: float = 0.15
    floor_height_cutoff: float = 0.15
    # heatmap -> mask
    tau: float = 0.5
    min_area: int | None = None  # None: 25 px scaled to the sensor size
    # sensor
    image_size: tuple[int, int] = (128, 96)
    hfov_deg: float = 58.0
    place_tilt: float = -60.0
    # embodiment
    base_radius: float = 0.17
    robot_height: float = 1.35
    inflation_margin: float = 0.02
    reach_min: float = 0.2
    reach_max: float = 0.52
    reach_z_min: float = 0.2
    reach_z_max: float = 1.1
    # control
    turn_tolerance_deg: float = 15.0
    lookahead: int = 5
    min_frontier_dist: float = 0.25
    stop_when_explored: bool = True
    nav_budget_factor: float = 2.0
    nav_budget_min: int = 100
    scan_turns: int = 12
    max_approach_steps: int = 12

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or v is None or isinstance(v, tuple):
                continue
            if f.name == "place_tilt":
                continue
            if v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        object.__setattr__(self, "image_size", tuple(int(s) for s in self.image_size))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown policy settings {sorted(unknown)}")
        return cls(**d)
