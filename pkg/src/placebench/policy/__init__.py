"""Embodied placement policy: SP map, exploration, navigation and placing."""

from .config import PolicyConfig
from .episode import EpisodeResult, run_episode, summarize
from .navigation import GoalRegion, frontier_step, navigate_to, select_goal
from .place import approach_and_place, choose_placement, judge_success, panoramic_place_scan, slab_score
from .spmap import SPMap2D, update_sp_map

__all__ = [
    "PolicyConfig", "EpisodeResult", "run_episode", "summarize", "GoalRegion", "frontier_step",
    "navigate_to", "select_goal", "approach_and_place", "choose_placement", "judge_success",
    "panoramic_place_scan", "slab_score", "SPMap2D", "update_sp_map",
]
