"""Record types shared by the pipeline steps and the client wire format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..categories import TARGET_CATEGORIES, canonical
from ..geometry import BBox
from ..maskio import decode_rle, encode_rle


@dataclass(eq=False)
class Detection:
    """One detected instance.  ``bbox`` is an inclusive pixel box."""

    category: str
    bbox: BBox
    score: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        c = canonical(self.category)
        if c is None:
            raise ValueError(f"unknown category {self.category!r}")
        self.category = c
        if self.bbox.normalized:
            raise ValueError("detection boxes are in pixel units")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)

    def within(self, shape) -> bool:
        h, w = shape[:2]
        b = self.bbox
        ok = b.x_min >= 0 and b.y_min >= 0 and b.x_max <= w - 1 and b.y_max <= h - 1
        return ok and (self.mask is None or self.mask.shape == (h, w))

    def to_dict(self) -> dict:
        d = {"category": self.category, "bbox": self.bbox.as_list(), "score": float(self.score)}
        if self.mask is not None:
            d["mask"] = encode_rle(self.mask)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        mask = decode_rle(d["mask"]) if d.get("mask") is not None else None
        return cls(d["category"], BBox(*map(float, d["bbox"]), normalized=False), float(d["score"]), mask)


@dataclass(eq=False)
class PipelineRecord:
    source_id: str
    category: str
    variant_ids: list[str]
    sp_annotation: np.ndarray
    distractors: list[str] = field(default_factory=list)
    provenance: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if canonical(self.category) not in TARGET_CATEGORIES:
            raise ValueError(f"{self.category!r} is not a target category")
        if not self.variant_ids:
            raise ValueError("a record needs at least one variant")
        self.sp_annotation = np.asarray(self.sp_annotation, dtype=bool)
        if not self.sp_annotation.any():
            raise ValueError("empty SP annotation")

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "category": self.category,
                "variant_ids": list(self.variant_ids), "sp_annotation": encode_rle(self.sp_annotation),
                "distractors": list(self.distractors), "provenance": list(self.provenance)}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineRecord":
        return cls(d["source_id"], d["category"], list(d["variant_ids"]), decode_rle(d["sp_annotation"]),
                   list(d.get("distractors", [])), list(d.get("provenance", [])))
