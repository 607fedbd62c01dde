"""Object-centric viewpoint sampling and paired with/without-object renders."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import CameraModel
from .agent import CAMERA_HEIGHT, DEFAULT_TILT, HFOV_DEG, IMAGE_SIZE, AgentState, camera_for, state_is_free
from .render import Render, render
from .scene import SceneSpec

RADII = (0.5, 1.0, 1.5, 2.0)
ANGLES_DEG = tuple(range(0, 360, 10))
MIN_COVERAGE = 0.05
ELEVATION_DEG = 30.0


@dataclass(frozen=True)
class ViewCandidate:
    radius: float
    theta_deg: float
    position: np.ndarray
    camera: CameraModel | None  # None when the position is not in free space


def candidate_positions(centroid, radii=RADII, angles_deg=ANGLES_DEG,
                        elevation_deg: float = ELEVATION_DEG) -> list[tuple[float, float, np.ndarray]]:
    """Camera centers on spheres of the given radii around ``centroid``."""
    c = np.asarray(centroid, dtype=np.float64)
    el = math.radians(elevation_deg)
    out = []
    for r in radii:
        for th in angles_deg:
            t = math.radians(th)
            d = np.array([math.cos(el) * math.cos(t), math.cos(el) * math.sin(t), math.sin(el)])
            out.append((float(r), float(th), c + r * d))
    return out


def candidates(scene: SceneSpec, iid: int, size=IMAGE_SIZE, hfov_deg: float = HFOV_DEG,
               radii=RADII, angles_deg=ANGLES_DEG, elevation_deg: float = ELEVATION_DEG) -> list[ViewCandidate]:
    """Every (radius, angle) candidate, before any filtering."""
    centroid = scene.centroid(iid)
    out = []
    for r, th, pos in candidate_positions(centroid, radii, angles_deg, elevation_deg):
        cam = None
        if scene.is_free(pos):
            cam = CameraModel.look_at(pos, centroid, size[0], size[1], hfov_deg)
        out.append(ViewCandidate(r, th, pos, cam))
    return out


def coverage(rend: Render, iid: int) -> float:
    return float(np.count_nonzero(rend.instance == iid)) / rend.instance.size


def sample_viewpoints(scene: SceneSpec, iid: int, size=IMAGE_SIZE, hfov_deg: float = HFOV_DEG,
                      min_coverage: float = MIN_COVERAGE, radii=RADII, angles_deg=ANGLES_DEG,
                      elevation_deg: float = ELEVATION_DEG) -> list[CameraModel]:
    """Cameras aimed at the object's centroid that see it over at least ``min_coverage`` of the frame."""
    kept = []
    for cand in candidates(scene, iid, size, hfov_deg, radii, angles_deg, elevation_deg):
        if cand.camera is None:
            continue
        if coverage(render(scene, cand.camera), iid) >= min_coverage:
            kept.append(cand.camera)
    return kept


def sample_random_viewpoints(scene: SceneSpec, n: int, rng: np.random.Generator, size=IMAGE_SIZE,
                             hfov_deg: float = HFOV_DEG, max_tries: int = 10000) -> list[CameraModel]:
    """Head-camera views from uniformly drawn free base poses."""
    lo = scene.origin_array[:2]
    hi = scene.extent[:2]
    out = []
    tries = 0
    while len(out) < n and tries < max_tries:
        tries += 1
        x, y = rng.uniform(lo, hi)
        heading = float(rng.integers(0, 12)) * 30.0
        st = AgentState(float(x), float(y), heading, CAMERA_HEIGHT, DEFAULT_TILT)
        if not state_is_free(scene, st):
            continue
        out.append(camera_for(st, size, hfov_deg))
    return out


@dataclass(frozen=True)
class ViewPair:
    with_object: Render
    without_object: Render
    gt_mask: np.ndarray  # pixels where the removed instance was visible


def paired_views(scene: SceneSpec, iid: int, cam: CameraModel, removed: SceneSpec | None = None) -> ViewPair:
    """Render ``cam`` with and without instance ``iid``."""
    if removed is None:
        removed = scene.remove_object(iid)
    a = render(scene, cam)
    b = render(removed, cam)
    return ViewPair(a, b, a.instance == iid)
