"""Agent embodiment: base pose, head camera and discrete navigation actions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from ..geometry import CameraModel, look_rotation
from .scene import SceneSpec

FORWARD_STEP = 0.25
TURN_DEG = 30.0
TILT_DEG = 30.0
TILT_RANGE = (-90.0, 30.0)

BASE_RADIUS = 0.17
ROBOT_HEIGHT = 1.35
CAMERA_HEIGHT = 1.31
DEFAULT_TILT = -30.0
IMAGE_SIZE = (640, 480)
HFOV_DEG = 58.0


class NavAction(str, enum.Enum):
    MOVE_FORWARD = "MoveForward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"
    LOOK_UP = "LookUp"
    LOOK_DOWN = "LookDown"


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float = 0.0  # degrees, counter-clockwise from +x
    camera_height: float = CAMERA_HEIGHT
    tilt: float = DEFAULT_TILT  # degrees, negative looks down
    held: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "heading", float(self.heading) % 360.0)
        if not (TILT_RANGE[0] <= self.tilt <= TILT_RANGE[1]):
            raise ValueError(f"tilt {self.tilt} outside {TILT_RANGE}")

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading,
                "camera_height": self.camera_height, "tilt": self.tilt}


def camera_for(state: AgentState, size=IMAGE_SIZE, hfov_deg: float = HFOV_DEG) -> CameraModel:
    th = math.radians(state.heading)
    ti = math.radians(state.tilt)
    fwd = (math.cos(th) * math.cos(ti), math.sin(th) * math.cos(ti), math.sin(ti))
    R = look_rotation(fwd)
    pos = (state.x, state.y, state.camera_height)
    return CameraModel.from_fov(size[0], size[1], hfov_deg, rotation=R, translation=pos)


@numba.njit(cache=True)
def _disk_hits(obst, ox, oy, res, x, y, radius):
    nx, ny = obst.shape
    k = int(np.ceil(radius / res)) + 1
    ci = int(np.floor((x - ox) / res))
    cj = int(np.floor((y - oy) / res))
    r2 = radius * radius
    for i in range(ci - k, ci + k + 1):
        for j in range(cj - k, cj + k + 1):
            if i < 0 or j < 0 or i >= nx or j >= ny:
                continue  # outside the map counts as free; walls bound every scene
            if not obst[i, j]:
                continue
            # distance from the point to the cell square
            qx = min(max(x, ox + i * res), ox + (i + 1) * res)
            qy = min(max(y, oy + j * res), oy + (j + 1) * res)
            if (qx - x) ** 2 + (qy - y) ** 2 < r2:
                return True
    return False


@numba.njit(cache=True)
def _swept_hits(obst, ox, oy, res, x0, y0, x1, y1, radius):
    length = np.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2)
    n = max(1, int(np.ceil(length / (0.25 * res))))
    for s in range(n + 1):
        f = s / n
        if _disk_hits(obst, ox, oy, res, x0 + f * (x1 - x0), y0 + f * (y1 - y0), radius):
            return True
    return False


def footprint_collides(obstacles: np.ndarray, origin_xy, resolution: float, x: float, y: float,
                       radius: float = BASE_RADIUS) -> bool:
    return bool(_disk_hits(obstacles, float(origin_xy[0]), float(origin_xy[1]), float(resolution),
                           float(x), float(y), float(radius)))


def sweep_collides(obstacles: np.ndarray, origin_xy, resolution: float, start, end,
                   radius: float = BASE_RADIUS) -> bool:
    return bool(_swept_hits(obstacles, float(origin_xy[0]), float(origin_xy[1]), float(resolution),
                            float(start[0]), float(start[1]), float(end[0]), float(end[1]),
                            float(radius)))


def state_is_free(scene: SceneSpec, state: AgentState, radius: float = BASE_RADIUS) -> bool:
    return not footprint_collides(scene.obstacle_map(ROBOT_HEIGHT), scene.origin[:2],
                                  scene.resolution, state.x, state.y, radius)


def step(scene: SceneSpec, state: AgentState, action: NavAction,
         radius: float = BASE_RADIUS) -> tuple[AgentState, bool]:
    """Apply one discrete action.  Returns ``(new_state, collided)``."""
    action = NavAction(action)
    if action is NavAction.MOVE_FORWARD:
        th = math.radians(state.heading)
        nx = state.x + FORWARD_STEP * math.cos(th)
        ny = state.y + FORWARD_STEP * math.sin(th)
        if sweep_collides(scene.obstacle_map(ROBOT_HEIGHT), scene.origin[:2], scene.resolution,
                          (state.x, state.y), (nx, ny), radius):
            return state, True
        return replace(state, x=nx, y=ny), False
    if action is NavAction.TURN_LEFT:
        return replace(state, heading=state.heading + TURN_DEG), False
    if action is NavAction.TURN_RIGHT:
        return replace(state, heading=state.heading - TURN_DEG), False
    delta = TILT_DEG if action is NavAction.LOOK_UP else -TILT_DEG
    tilt = state.tilt + delta
    if not (TILT_RANGE[0] <= tilt <= TILT_RANGE[1]):
        return state, False
    return replace(state, tilt=tilt), False
