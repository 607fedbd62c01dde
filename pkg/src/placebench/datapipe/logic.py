"""Decision steps: prompt points, mask choice, target sampling, re-detection filter, records."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..categories import TARGET_CATEGORIES, canonical
from ..geometry import BBox, box_mask, iou
from .types import Detection, PipelineRecord

IOU_THRESHOLD = 0.9
TARGET_KEEP_P = 0.5
MAX_DISTRACTORS = 4


def sam_prompt(det: Detection) -> tuple[int, int]:
    """Box center as an integer pixel ``(x, y)``, halves rounded up."""
    b = det.bbox
    # floor(v + 0.5) rather than round(): banker's rounding would send 2.5 and 3.5 different ways
    return int(np.floor((b.x_min + b.x_max) / 2.0 + 0.5)), int(np.floor((b.y_min + b.y_max) / 2.0 + 0.5))


def pick_best_mask(candidates: Sequence) -> np.ndarray:
    """Highest-scoring of three ``(mask, score)`` candidates; the first wins ties."""
    if len(candidates) == 0:
        raise ValueError("no candidate masks")
    if len(candidates) != 3:
        raise ValueError(f"expected 3 candidate masks, got {len(candidates)}")
    scores = [float(s) for _, s in candidates]
    return np.asarray(candidates[int(np.argmax(scores))][0], dtype=bool)


def select_inpaint_targets(dets: Sequence[Detection], category: str, rng: np.random.Generator):
    """Random non-empty subset of ``category`` instances plus 1..4 distractors of other target categories.

    Each instance joins the subset independently with probability one half;
    an empty draw is redrawn.  Both lists keep detection order.
    """
    cat = canonical(category)
    own = [d for d in dets if d.category == cat]
    if not own:
        raise ValueError(f"no {category!r} instance among the detections")
    while True:
        keep = rng.random(len(own)) < TARGET_KEEP_P
        if keep.any():
            break
    targets = [d for d, k in zip(own, keep) if k]
    others = [d for d in dets if d.category != cat and d.category in TARGET_CATEGORIES]
    distractors = []
    if others:
        n = min(int(rng.integers(1, MAX_DISTRACTORS + 1)), len(others))
        pick = np.sort(rng.choice(len(others), size=n, replace=False))
        distractors = [others[i] for i in pick]
    return targets, distractors


def box_iou(a: BBox, b: BBox) -> float:
    """IoU of two inclusive pixel boxes."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    inter = max(iw, 0.0) * max(ih, 0.0)
    area = lambda r: (r.x_max - r.x_min + 1) * (r.y_max - r.y_min + 1)  # noqa: E731
    union = area(a) + area(b) - inter
    return inter / union if union > 0 else 0.0


def region_iou(a: Detection, b: Detection) -> tuple[float, str]:
    """IoU of two detections on masks when both carry one, else on boxes."""
    if a.mask is not None and b.mask is not None:
        return iou(a.mask, b.mask), "mask"
    return box_iou(a.bbox, b.bbox), "box"


def verify_inpainting(before: Sequence[Detection], after: Sequence[Detection], removed: Sequence[Detection],
                      iou_threshold: float = IOU_THRESHOLD, log: list | None = None) -> str:
    """``"discard"`` when a removed instance is re-detected with IoU above the threshold, else ``"keep"``.

    ``before`` must contain every removed detection.  When ``log`` is given,
    the comparison basis (mask or box) of each checked pair is appended.
    """
    ids = {id(d) for d in before}
    if any(id(r) not in ids for r in removed):
        raise ValueError("removed detections must come from the pre-inpainting detections")
    for r in removed:
        for a in after:
            if a.category != r.category:
                continue
            v, basis = region_iou(a, r)
            if log is not None:
                log.append({"check": r.category, "basis": basis, "iou": round(v, 6)})
            if v > iou_threshold:
                return "discard"
    return "keep"


def build_record(source: str, category: str, removed_masks: Sequence, variants: Sequence[str],
                 distractors: Sequence[str] = (), provenance: Sequence[dict] = ()) -> PipelineRecord:
    """Record whose SP annotation is the pixelwise union of the removed target masks."""
    if len(removed_masks) == 0:
        raise ValueError("nothing was removed")
    ann = np.zeros(np.shape(removed_masks[0]), dtype=bool)
    for m in removed_masks:
        ann |= np.asarray(m, dtype=bool)
    return PipelineRecord(str(source), canonical(category) or category, list(variants), ann,
                          list(distractors), [dict(p) for p in provenance])


def detection_region(det: Detection, shape) -> np.ndarray:
    return det.mask.copy() if det.mask is not None else box_mask(det.bbox, shape)
