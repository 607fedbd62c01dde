"""Voxel scenes, rendering, agent motion and viewpoint sampling."""

from .agent import AgentState, NavAction, camera_for, step
from .render import Render, raycast_depth, render, render_semantic
from .scene import Instance, SceneBuilder, SceneError, SceneSpec
from .surfaces import extract_placeable_surfaces, gt_placements

__all__ = [
    "AgentState", "NavAction", "camera_for", "step",
    "Render", "raycast_depth", "render", "render_semantic",
    "Instance", "SceneBuilder", "SceneError", "SceneSpec",
    "extract_placeable_surfaces", "gt_placements",
]
