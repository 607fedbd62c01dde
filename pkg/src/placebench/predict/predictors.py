"""Oracle, receptacle-prior, box-adapter, file-backed and constant predictors."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..categories import LABEL_ID
from ..geometry import BBox, bbox_to_mask
from ..maskio import load_heatmap_png
from ..scenesim.render import top_face_mask
from ..scenesim.surfaces import MIN_CLEARANCE, gt_placements, surface_cells
from . import priors
from .base import Observation, check_heatmap

log = logging.getLogger(__name__)


def _need_render(obs: Observation, who: str):
    if obs.render is None or obs.scene is None:
        raise ValueError(f"{who} needs a rendered view of a known scene")
    return obs.render, obs.scene


@dataclass
class OraclePredictor:
    """Ground-truth placement regions of the queried category."""

    table: object = None
    min_clearance: int = MIN_CLEARANCE
    name: str = "oracle"

    def predict(self, obs: Observation, category: str) -> np.ndarray:
        rend, scene = _need_render(obs, "oracle predictor")
        table = self.table if self.table is not None else priors.load_table(priors.EVAL)
        recs = priors.receptacles(table, category)
        regions = gt_placements(scene, category, rend, recs, self.min_clearance)
        return regions.union().astype(np.float64)


def oracle_predict(obs: Observation, category: str) -> np.ndarray:
    return OraclePredictor().predict(obs, category)


@dataclass
class PriorPredictor:
    """Receptacles named by a prior table, either their upward surfaces or their full masks."""

    table: object = None
    surface: bool = True
    min_clearance: int = MIN_CLEARANCE
    name: str = "prior"
    _warned: set = field(default_factory=set, repr=False)

    def _table(self):
        return self.table if self.table is not None else priors.load_table(priors.BASELINE)

    def predict(self, obs: Observation, category: str) -> np.ndarray:
        table = self._table()
        recs = priors.receptacles(table, category)  # KeyError for absent rows
        if not recs and category not in self._warned:
            self._warned.add(category)
            log.warning("prior row for %r names no known receptacle; emitting an empty heatmap", category)
        if not recs:
            return np.zeros(obs.shape)
        if self.surface:
            rend, scene = _need_render(obs, "surface prior predictor")
            return top_face_mask(rend, surface_cells(scene, recs, self.min_clearance)).astype(np.float64)
        ids = [LABEL_ID[c] for c in recs]
        return np.isin(obs.label, ids).astype(np.float64)


def prior_predict(obs: Observation, category: str, table=None, surface: bool = True) -> np.ndarray:
    return PriorPredictor(table, surface).predict(obs, category)


NONE_MARKER = "NONE"
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_BOX_RE = re.compile(r"\[\s*(" + _NUM + r")\s*,\s*(" + _NUM + r")\s*,\s*(" + _NUM + r")\s*,\s*(" + _NUM + r")\s*\]")


def parse_boxes(text: str) -> tuple[list[BBox], int]:
    """Normalized boxes found in free-form model output, one per line.

    Returns the boxes and the number of lines that looked like a box but
    could not be used.  A reply consisting of the none-marker yields no boxes.
    """
    boxes, bad = [], 0
    if text.strip().strip(".").upper() == NONE_MARKER:
        return boxes, 0
    for line in text.splitlines():
        m = _BOX_RE.search(line)
        if m is None:
            if "[" in line:
                bad += 1
                log.warning("skipping malformed box line %r", line)
            continue
        try:
            boxes.append(BBox(*(float(g) for g in m.groups())))
        except ValueError as e:
            bad += 1
            log.warning("skipping invalid box %r: %s", line, e)
    return boxes, bad


def bbox_adapter(boxes, size) -> np.ndarray:
    """Union of box masks as a {0,1} heatmap; ``size`` is (width, height)."""
    w, h = size
    if isinstance(boxes, str):
        boxes, _ = parse_boxes(boxes)
    out = np.zeros((h, w), dtype=bool)
    for b in boxes:
        m, _ = bbox_to_mask(b, w, h)
        out |= m
    return out.astype(np.float64)


@dataclass
class TextBoxPredictor:
    """Adapts a callable returning box text (a VLM stand-in) to the predictor interface."""

    reply: object  # callable(obs, category) -> str
    name: str = "bbox"

    def predict(self, obs: Observation, category: str) -> np.ndarray:
        h, w = obs.shape
        return bbox_adapter(self.reply(obs, category), (w, h))


@dataclass
class FilePredictor:
    """Heatmaps read from ``<root>/<image_id>.png`` (16-bit grayscale)."""

    root: Path
    name: str = "file"

    def path_for(self, image_id: str) -> Path:
        return Path(self.root) / f"{image_id}.png"

    def predict(self, obs: Observation, category: str) -> np.ndarray:
        if obs.image_id is None:
            raise ValueError("file predictor needs an image id")
        p = self.path_for(obs.image_id)
        if not p.exists():
            raise FileNotFoundError(p)
        return check_heatmap(load_heatmap_png(p), obs.shape)


@dataclass
class ConstantPredictor:
    value: float = 0.0
    name: str = "constant"

    def predict(self, obs: Observation, category: str) -> np.ndarray:
        return np.full(obs.shape, float(self.value))


@dataclass
class FloorPredictor:
    """Marks every floor pixel; a scripted bad predictor."""

    name: str = "floor"

    def predict(self, obs: Observation, category: str) -> np.ndarray:
        return (obs.label == LABEL_ID["Floor"]).astype(np.float64)


@dataclass
class WrongReceptaclePredictor:
    """Marks upward surfaces of receptacles outside the category's evaluation row."""

    name: str = "wrong"

    def predict(self, obs: Observation, category: str) -> np.ndarray:
        from ..categories import RECEPTACLE_CATEGORIES

        rend, scene = _need_render(obs, "wrong-receptacle predictor")
        good = priors.receptacles(priors.load_table(priors.EVAL), category)
        bad = [c for c in RECEPTACLE_CATEGORIES if c not in good]
        return top_face_mask(rend, surface_cells(scene, bad)).astype(np.float64)


KINDS = ("oracle", "prior", "prior-full", "constant", "floor", "wrong")


def make_predictor(kind: str, **kw):
    if kind == "oracle":
        return OraclePredictor(**kw)
    if kind == "prior":
        return PriorPredictor(surface=True, **kw)
    if kind == "prior-full":
        return PriorPredictor(surface=False, name="prior-full", **kw)
    if kind == "constant":
        return ConstantPredictor(**kw)
    if kind == "floor":
        return FloorPredictor()
    if kind == "wrong":
        return WrongReceptaclePredictor()
    if kind == "file":
        return FilePredictor(**kw)
    raise ValueError(f"unknown predictor kind {kind!r}")
