"""Per-image pipeline (detect, remove, re-detect, record) with a byte-stable record store."""

from __future__ import annotations

import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ..categories import LABEL_ID, PALETTE, RECEPTACLE_CATEGORIES, TARGET_CATEGORIES
from ..geometry import box_mask
from ..maskio import load_rgb_png, save_rgb_png
from .clients import ClientError
from .logic import IOU_THRESHOLD, pick_best_mask, sam_prompt, select_inpaint_targets, verify_inpainting
from .logic import build_record
from .types import PipelineRecord

log = logging.getLogger(__name__)

SKIP_NO_DETECTION = "no-detection"
SKIP_CLIENT_ERROR = "client-error"


@dataclass(frozen=True)
class PipelineConfig:
    iou_threshold: float = IOU_THRESHOLD
    n_variants: int = 2
    noise: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in [0, 1]")
        if self.n_variants < 1:
            raise ValueError("n_variants must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineStats:
    processed: int = 0
    detected: int = 0
    inpainted: int = 0
    filtered: int = 0
    kept: int = 0
    skipped: int = 0
    skip_reasons: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["skip_reasons"] = dict(sorted(self.skip_reasons.items()))
        return d

    def format(self) -> str:
        return (f"processed {self.processed} | detected {self.detected} | inpainted {self.inpainted} | "
                f"filtered {self.filtered} | kept {self.kept} | skipped {self.skipped}")


@dataclass
class ImageOutcome:
    image_id: str
    status: str  # kept | filtered | skipped
    detected: bool = False
    inpainted: bool = False
    reason: str = ""
    record: PipelineRecord | None = None
    variants: dict = field(default_factory=dict)  # variant id -> image


@dataclass
class PipelineResult:
    records: list[PipelineRecord]
    stats: PipelineStats
    outcomes: list[ImageOutcome]
    variants: dict  # variant id -> image, kept records only


def image_rng(seed: int, image_id: str) -> np.random.Generator:
    """Generator keyed by the image id, so results do not depend on processing order."""
    return np.random.default_rng([int(seed), zlib.crc32(image_id.encode())])


def _slug(s: str) -> str:
    return s.lower().replace(" ", "-")


def process_image(image_id: str, image: np.ndarray, clients, cfg: PipelineConfig, seed: int) -> ImageOutcome:
    image = np.asarray(image, dtype=np.uint8)
    shape = image.shape[:2]
    rng = image_rng(seed, image_id)
    prov = [{"op": "query", "image": image_id, "seed": int(seed)}]
    try:
        before = clients.detect(image)
        prov.append({"op": "detect", "n": len(before)})
        if any(not d.within(shape) for d in before):
            raise ClientError("detection outside the image")
        present = sorted({d.category for d in before if d.category in TARGET_CATEGORIES},
                         key=TARGET_CATEGORIES.index)
        if not present:
            return ImageOutcome(image_id, "skipped", reason=SKIP_NO_DETECTION)
        category = present[int(rng.integers(len(present)))]
        targets, distractors = select_inpaint_targets(before, category, rng)
        removed = targets + distractors
        masks = []
        for d in removed:
            pt = sam_prompt(d)
            m = pick_best_mask(clients.segment(image, pt))
            # keep the segment inside the prompting box; fall back to the box when that leaves nothing
            m = m & box_mask(d.bbox, shape)
            if not m.any():
                m = box_mask(d.bbox, shape)
            masks.append(m)
            prov.append({"op": "segment", "category": d.category, "point": list(pt), "area": int(m.sum())})
        union = np.logical_or.reduce(masks)
        inpaint_seed = int(rng.integers(2**31))
        painted = clients.inpaint(image, union, inpaint_seed)
        prov.append({"op": "inpaint", "seed": inpaint_seed, "area": int(union.sum())})
        after = clients.detect(painted)
        prov.append({"op": "detect", "n": len(after)})
        checks: list = []
        verdict = verify_inpainting(before, after, removed, cfg.iou_threshold, checks)
        prov.append({"op": "verify", "threshold": cfg.iou_threshold, "verdict": verdict,
                     "basis": sorted({c["basis"] for c in checks})})
        if verdict == "discard":
            return ImageOutcome(image_id, "filtered", True, True, "re-detected")
        variants = {}
        for k in range(cfg.n_variants):
            s = int(rng.integers(2**31))
            vid = f"{image_id}__{_slug(category)}__v{k}"
            variants[vid] = clients.augment(painted, s, cfg.noise)
            prov.append({"op": "augment", "seed": s, "noise": cfg.noise, "variant": vid})
    except ClientError as e:
        log.warning("image %s skipped: %s", image_id, e)
        return ImageOutcome(image_id, "skipped", reason=SKIP_CLIENT_ERROR)
    target_masks = masks[: len(targets)]
    rec = build_record(image_id, category, target_masks, list(variants),
                       [d.category for d in distractors], prov)
    return ImageOutcome(image_id, "kept", True, True, "", rec, variants)


def run_pipeline(images: Iterable[tuple[str, np.ndarray]], clients, cfg: PipelineConfig = PipelineConfig(),
                 seed: int = 0, workers: int = 1) -> PipelineResult:
    """Process every ``(image_id, rgb)`` pair; outputs are ordered by image id.

    A failing client call skips the image and the run continues.
    """
    items = sorted(images, key=lambda t: t[0])
    ids = [i for i, _ in items]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids")

    def work(item):
        return process_image(item[0], item[1], clients, cfg, seed)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outcomes = list(ex.map(work, items))
    else:
        outcomes = [work(it) for it in items]

    stats = PipelineStats()
    records, variants = [], {}
    for o in outcomes:
        stats.processed += 1
        stats.detected += o.detected
        stats.inpainted += o.inpainted
        if o.status == "kept":
            stats.kept += 1
            records.append(o.record)
            variants.update(o.variants)
        elif o.status == "filtered":
            stats.filtered += 1
        else:
            stats.skipped += 1
            stats.skip_reasons[o.reason] = stats.skip_reasons.get(o.reason, 0) + 1
    return PipelineResult(records, stats, outcomes, variants)


# ------------------------------------------------------------------ storage


class RecordStore:
    """``manifest.jsonl`` (one record per line) plus ``images/<variant id>.png``."""

    MANIFEST = "manifest.jsonl"

    def __init__(self, root):
        self.root = Path(root)

    def path_of(self, variant_id: str) -> Path:
        return self.root / "images" / f"{variant_id}.png"

    def write(self, result: PipelineResult) -> Path:
        (self.root / "images").mkdir(parents=True, exist_ok=True)
        for vid in sorted(result.variants):
            save_rgb_png(result.variants[vid], self.path_of(vid))
        man = self.root / self.MANIFEST
        with open(man, "w") as f:
            for r in result.records:
                f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
        with open(self.root / "stats.json", "w") as f:
            json.dump(result.stats.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")
        return man

    def read(self) -> list[PipelineRecord]:
        out = []
        with open(self.root / self.MANIFEST) as f:
            for line in f:
                if line.strip():
                    rec = PipelineRecord.from_dict(json.loads(line))
                    missing = [v for v in rec.variant_ids if not self.path_of(v).exists()]
                    if missing:
                        raise FileNotFoundError(f"unresolvable variants {missing}")
                    out.append(rec)
        return out


# ------------------------------------------------------------------ image sets


def read_image_manifest(path) -> list[tuple[str, np.ndarray]]:
    """JSON-lines rows ``{"image_id": ..., "path": ...}``; paths relative to the manifest."""
    path = Path(path)
    out = []
    with open(path) as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            if "image_id" not in row or "path" not in row:
                raise ValueError(f"{path}:{n}: rows need image_id and path")
            out.append((str(row["image_id"]), load_rgb_png(path.parent / row["path"])))
    return out


def fixture_image(rng: np.random.Generator, shape=(96, 128), max_objects: int = 5) -> np.ndarray:
    """Flat-colored synthetic scene: dark background, receptacle slabs, target-colored objects."""
    h, w = shape
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = rng.integers(0, 60, size=3)  # palette channels are all >= 80, so never a detection
    for _ in range(int(rng.integers(1, 3))):
        c = RECEPTACLE_CATEGORIES[int(rng.integers(len(RECEPTACLE_CATEGORIES)))]
        y0 = int(rng.integers(h // 2, h - 10))
        x0 = int(rng.integers(0, w - 30))
        img[y0:, x0:x0 + int(rng.integers(25, 60))] = PALETTE[LABEL_ID[c]]
    cats = rng.choice(len(TARGET_CATEGORIES), size=int(rng.integers(1, 4)), replace=False)
    for _ in range(int(rng.integers(1, max_objects + 1))):
        c = TARGET_CATEGORIES[int(cats[int(rng.integers(len(cats)))])]
        oh, ow = int(rng.integers(6, 20)), int(rng.integers(6, 24))
        y0, x0 = int(rng.integers(0, h - oh)), int(rng.integers(0, w - ow))
        img[y0:y0 + oh, x0:x0 + ow] = PALETTE[LABEL_ID[c]]
    return img


def write_fixture_set(root, n: int, seed: int, shape=(96, 128)) -> Path:
    """Write ``n`` fixture images and their manifest; returns the manifest path."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    man = root / "images.jsonl"
    with open(man, "w") as f:
        for i in range(n):
            iid = f"img{i:05d}"
            save_rgb_png(fixture_image(rng, shape), root / "images" / f"{iid}.png")
            f.write(json.dumps({"image_id": iid, "path": f"images/{iid}.png"}) + "\n")
    return man
