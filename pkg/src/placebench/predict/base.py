"""Observation passed to predictors and the predictor interface."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..geometry import CameraModel


@dataclass(frozen=True)
class Observation:
    """One head-camera frame.  ``render`` and ``scene`` are only consulted by privileged predictors."""

    rgb: np.ndarray
    depth: np.ndarray
    label: np.ndarray
    camera: CameraModel
    render: object | None = None
    scene: object | None = None
    image_id: str | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


class Predictor(Protocol):
    name: str

    def predict(self, obs: Observation, category: str) -> np.ndarray: ...


def check_heatmap(h: np.ndarray, shape) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape != tuple(shape):
        raise ValueError(f"heatmap shape {h.shape} != {tuple(shape)}")
    if not np.all((h >= 0) & (h <= 1)):
        raise ValueError("heatmap values must lie in [0, 1]")
    return h


def observe(scene, cam, image_id: str | None = None) -> Observation:
    from ..scenesim.render import render, render_rgb

    r = render(scene, cam)
    return Observation(render_rgb(scene, r), r.depth, r.label, cam, r, scene, image_id)
