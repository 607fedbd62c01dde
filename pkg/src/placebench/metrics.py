"""Region matching and the placement metrics (precision, recall, RSP, RSR, TrP).

A prediction is scored by intersection-over-prediction (IoP) against each
reference region.  A reference region is *covered* when some prediction
reaches IoP >= T on it; covered regions are the true positives, so several
predictions inside one region still count a single TP.  Predictions that
reach the threshold on no region are false positives.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geometry import DimensionError, RegionSet


@dataclass(frozen=True)
class MatchConfig:
    threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.threshold <= 1.0):
            raise ValueError("threshold must lie in (0, 1]")


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    assignment: tuple  # per prediction: GT index or None
    n_gt: int
    n_pred: int


@dataclass(frozen=True)
class ImageMetrics:
    precision: float | None
    recall: float | None
    counts: MatchResult


def iop_table(preds: RegionSet, gts: RegionSet) -> np.ndarray:
    """``table[j, i]`` = IoP of prediction ``j`` against reference ``i``."""
    if preds.shape != gts.shape:
        raise DimensionError(f"frame mismatch: {preds.shape} vs {gts.shape}")
    if len(preds) == 0 or len(gts) == 0:
        return np.zeros((len(preds), len(gts)))
    P = preds.flat()
    inter = P @ gts.flat().T
    area = P.sum(axis=1)
    if np.any(area == 0):
        raise ValueError("prediction regions must be non-empty")
    return inter / area[:, None]


def match_regions(preds: RegionSet, gts: RegionSet, cfg: MatchConfig = MatchConfig()) -> MatchResult:
    table = iop_table(preds, gts)
    hit = table >= cfg.threshold
    covered = hit.any(axis=0) if len(preds) else np.zeros(len(gts), dtype=bool)
    matched = hit.any(axis=1) if len(gts) else np.zeros(len(preds), dtype=bool)
    assignment = []
    for j in range(len(preds)):
        # argmax picks the lowest index among ties
        assignment.append(int(np.argmax(table[j])) if matched[j] else None)
    tp = int(np.count_nonzero(covered))
    return MatchResult(
        tp=tp,
        fp=int(np.count_nonzero(~matched)),
        fn=len(gts) - tp,
        assignment=tuple(assignment),
        n_gt=len(gts),
        n_pred=len(preds),
    )


def image_metrics(match: MatchResult, has_gt: bool | None = None) -> ImageMetrics:
    if has_gt is None:
        has_gt = match.n_gt > 0
    denom = match.tp + match.fp
    precision = match.tp / denom if denom > 0 else None
    recall = None
    if has_gt and match.tp + match.fn > 0:
        recall = match.tp / (match.tp + match.fn)
    return ImageMetrics(precision, recall, match)


def receptacle_surface_metrics(preds: RegionSet, surfaces: RegionSet,
                               cfg: MatchConfig = MatchConfig()) -> ImageMetrics:
    """RSP/RSR contribution of one image.  Undefined when there are no surfaces."""
    m = match_regions(preds, surfaces, cfg)
    if len(surfaces) == 0:
        return ImageMetrics(None, None, m)
    return image_metrics(m, has_gt=True)


def target_precision(preds: RegionSet, gt_placements: RegionSet,
                     cfg: MatchConfig = MatchConfig()) -> float | None:
    return image_metrics(match_regions(preds, gt_placements, cfg)).precision


@dataclass(frozen=True)
class ImageRecord:
    """All metric contributions of one evaluated image."""

    image_id: str
    sp: ImageMetrics | None = None
    surface: ImageMetrics | None = None
    trp: float | None = None


def _mean(values: Iterable[float | None]) -> tuple[float | None, int]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, 0
    return math.fsum(vals) / len(vals), len(vals)


@dataclass
class DatasetReport:
    precision: float | None
    recall: float | None
    rsp: float | None
    rsr: float | None
    trp: float | None
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall,
            "rsp": self.rsp, "rsr": self.rsr, "trp": self.trp,
            "counts": dict(self.counts),
        }

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def aggregate(per_image: Sequence[ImageRecord]) -> DatasetReport:
    """Average each metric over the images where it is defined."""
    precision, n_p = _mean(r.sp.precision if r.sp else None for r in per_image)
    recall, n_r = _mean(r.sp.recall if r.sp else None for r in per_image)
    rsp, n_rsp = _mean(r.surface.precision if r.surface else None for r in per_image)
    rsr, n_rsr = _mean(r.surface.recall if r.surface else None for r in per_image)
    trp, n_trp = _mean(r.trp for r in per_image)
    return DatasetReport(
        precision, recall, rsp, rsr, trp,
        counts={"images": len(per_image), "precision": n_p, "recall": n_r,
                "rsp": n_rsp, "rsr": n_rsr, "trp": n_trp},
    )


CSV_FIELDS = ["image_id", "tp", "fp", "fn", "precision", "recall", "rsp", "rsr", "trp"]


def write_per_image_csv(records: Sequence[ImageRecord], path, extra: dict | None = None) -> None:
    extra = extra or {}
    fields = CSV_FIELDS + sorted({k for v in extra.values() for k in v})
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        for r in records:
            row = {"image_id": r.image_id}
            if r.sp is not None:
                c = r.sp.counts
                row.update(tp=c.tp, fp=c.fp, fn=c.fn, precision=r.sp.precision, recall=r.sp.recall)
            if r.surface is not None:
                row.update(rsp=r.surface.precision, rsr=r.surface.recall)
            row["trp"] = r.trp
            row.update(extra.get(r.image_id, {}))
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
