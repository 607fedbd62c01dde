"""Object-removal view datasets and per-image SP evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CameraModel, RegionSet, connected_components
from .maskio import decode_rle, encode_rle, save_depth_png, save_rgb_png
from .metrics import ImageRecord, MatchConfig, image_metrics, match_regions, receptacle_surface_metrics
from .metrics import target_precision
from .modelmath import scaled_min_area, threshold_heatmap
from .predict import priors
from .predict.base import Observation, observe
from .scenesim.render import render_rgb
from .scenesim.scene import SceneSpec
from .scenesim.surfaces import gt_placements, surface_regions
from .scenesim.viewpoints import paired_views, sample_viewpoints

VIEW_SIZE = (160, 120)


@dataclass
class ViewSample:
    """One with/without-object view pair and its reference regions (all on the object-free frame)."""

    image_id: str
    scene_file: str
    category: str
    removed_iid: int
    camera: CameraModel
    gt: RegionSet  # where the removed object was visible
    placements: RegionSet  # exact placement regions for the category
    surfaces: RegionSet  # placeable surfaces of the category's receptacles

    def to_dict(self) -> dict:
        enc = lambda rs: [encode_rle(m) for m in rs]  # noqa: E731
        return {"image_id": self.image_id, "scene_file": self.scene_file, "category": self.category,
                "removed_iid": self.removed_iid, "camera": self.camera.to_dict(),
                "gt": enc(self.gt), "placements": enc(self.placements), "surfaces": enc(self.surfaces)}

    @classmethod
    def from_dict(cls, d: dict) -> "ViewSample":
        cam = CameraModel.from_dict(d["camera"])
        shape = (cam.height, cam.width)
        dec = lambda rows: RegionSet.from_masks([decode_rle(r) for r in rows], shape)  # noqa: E731
        return cls(str(d["image_id"]), str(d["scene_file"]), str(d["category"]), int(d["removed_iid"]),
                   cam, dec(d["gt"]), dec(d["placements"]), dec(d["surfaces"]))


def make_view_samples(scene: SceneSpec, scene_file: str, rng: np.random.Generator, size=VIEW_SIZE,
                      views_per_object: int = 2, table=None, with_images: bool = False):
    """Up to ``views_per_object`` sampled views per target object, each paired with its removal.

    Objects whose category has no row in ``table`` are left in place and not queried.

    With ``with_images`` the result holds ``(sample, rgb_with, rgb_without, depth_without)``.
    """
    table = table if table is not None else priors.load_table(priors.EVAL)
    out = []
    for inst in sorted(scene.instances_of(kind="object"), key=lambda i: i.id):
        if inst.category not in table:
            continue  # no reference row, so nothing to score against
        cams = sample_viewpoints(scene, inst.id, size)
        if not cams:
            continue
        pick = np.sort(rng.choice(len(cams), size=min(views_per_object, len(cams)), replace=False))
        removed = scene.remove_object(inst.id)
        recs = priors.receptacles(table, inst.category)
        for k, idx in enumerate(pick):
            cam = cams[int(idx)]
            pair = paired_views(scene, inst.id, cam, removed)
            rend = pair.without_object
            s = ViewSample(f"{scene.name}__o{inst.id}__v{k}", scene_file, inst.category, inst.id, cam,
                           connected_components(pair.gt_mask),
                           gt_placements(removed, inst.category, rend, recs),
                           surface_regions(removed, rend, recs))
            if with_images:
                out.append((s, render_rgb(scene, pair.with_object), render_rgb(removed, rend), rend.depth))
            else:
                out.append(s)
    return out


def write_view_dataset(items, root, manifest: str = "views.jsonl") -> Path:
    """Write ``(sample, rgb_with, rgb_without, depth)`` tuples as PNGs plus a manifest."""
    root = Path(root)
    (root / "views").mkdir(parents=True, exist_ok=True)
    path = root / manifest
    with open(path, "w") as f:
        for s, rgb_with, rgb, depth in items:
            stem = f"views/{s.image_id}"
            save_rgb_png(rgb_with, root / f"{stem}_with.png")
            save_rgb_png(rgb, root / f"{stem}_rgb.png")
            save_depth_png(depth, root / f"{stem}_depth.png")
            row = s.to_dict()
            row.update(rgb_with=f"{stem}_with.png", rgb=f"{stem}_rgb.png", depth=f"{stem}_depth.png")
            f.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def read_view_dataset(path) -> list[ViewSample]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                out.append(ViewSample.from_dict(json.loads(line)))
            except (KeyError, ValueError) as e:
                raise ValueError(f"{path}:{n}: bad view row ({e})") from e
    return out


def sample_observation(sample: ViewSample, scene: SceneSpec) -> Observation:
    """Re-render the object-free frame of ``sample``."""
    return observe(scene.remove_object(sample.removed_iid), sample.camera, sample.image_id)


def predicted_regions(heat, tau: float = 0.5, min_area: int | None = None) -> RegionSet:
    heat = np.asarray(heat, dtype=np.float64)
    if min_area is None:
        min_area = scaled_min_area(heat.shape)
    return connected_components(threshold_heatmap(heat, tau, min_area))


def evaluate_sample(sample: ViewSample, heat, threshold: float = 0.5, tau: float = 0.5,
                    min_area: int | None = None) -> ImageRecord:
    """Metric contributions of one heatmap.  TrP is left undefined on frames without placements."""
    preds = predicted_regions(heat, tau, min_area)
    cfg = MatchConfig(threshold)
    sp = image_metrics(match_regions(preds, sample.gt, cfg), has_gt=len(sample.gt) > 0)
    surface = receptacle_surface_metrics(preds, sample.surfaces, cfg)
    trp = target_precision(preds, sample.placements, cfg) if len(sample.placements) else None
    return ImageRecord(sample.image_id, sp, surface, trp)


__all__ = [
    "ViewSample", "make_view_samples", "write_view_dataset", "read_view_dataset", "sample_observation",
    "predicted_regions", "evaluate_sample", "VIEW_SIZE",
]
