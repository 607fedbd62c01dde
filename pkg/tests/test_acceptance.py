"""Acceptance criteria 1-11, one PASS/FAIL line each.

Lines are printed as each check finishes and repeated in the terminal summary.
Criteria 9 and 10 run full episode suites and are marked ``slow``.
"""

from __future__ import annotations

import functools
import re
import time

import numpy as np
import pytest
from oracles import brute_depth
from scipy.spatial.transform import Rotation

from placebench.datapipe import Detection, MockClients, RecordStore, run_pipeline, verify_inpainting
from placebench.datapipe import read_image_manifest, write_fixture_set
from placebench.geometry import (
    CameraModel, RegionSet, backproject, bin_to_voxels, height_collapse, iop, iou, pixel_bbox_of,
)
from placebench.metrics import MatchConfig, aggregate, match_regions
from placebench.modelmath import dice_loss
from placebench.policy import run_episode, summarize
from placebench.policy.episode import FAILURE_MODES, NAV, NONE, results_digest
from placebench.predict import ConstantPredictor, OraclePredictor, make_predictor
from placebench.scenesim import Instance, SceneSpec, render
from placebench.scenesim.generate import make_easy_episode, make_mixed_episode
from placebench.scenesim.viewpoints import RADII, candidates, coverage, sample_viewpoints
from placebench.viewdata import evaluate_sample, make_view_samples, sample_observation

RESULTS: dict[int, str] = {}


def criterion(n: int, budget_s: float | None = None):
    """Record a PASS/FAIL line for criterion ``n``; the body returns a short detail string."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except Exception as e:
                RESULTS[n] = f"FAIL criterion {n}: {type(e).__name__}: {str(e).splitlines()[0] if str(e) else ''}"
                print(RESULTS[n])
                raise
            dt = time.perf_counter() - t0
            ok = budget_s is None or dt < budget_s
            timing = f"{dt:.1f}s" + (f" (budget {budget_s:g}s)" if budget_s else "")
            RESULTS[n] = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{timing}]"
            print(RESULTS[n])
            assert ok, RESULTS[n]

        return run

    return wrap


def block(shape, r0, c0, h, w):
    m = np.zeros(shape, dtype=bool)
    m[r0:r0 + h, c0:c0 + w] = True
    return m


# ------------------------------------------------------------------ 1


@criterion(1, budget_s=1.0)
def test_c01_iop_vs_iou_fidelity():
    shape = (140, 140)
    gt = block(shape, 20, 20, 100, 100)
    p1, p2 = block(shape, 30, 30, 10, 10), block(shape, 80, 80, 10, 10)
    assert iop(gt, p1) == 1.0 and iop(gt, p2) == 1.0
    assert iou(gt, p1) < 0.5 and iou(gt, p2) < 0.5
    m = match_regions(RegionSet.from_masks([p1, p2]), RegionSet.from_masks([gt]), MatchConfig(0.5))
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)
    return f"IoP=1.0 for both, IoU={iou(gt, p1):.2f}, tp/fp/fn={m.tp}/{m.fp}/{m.fn}"


# ------------------------------------------------------------------ 2


def recount(preds, gts, T):
    """Exhaustive pairwise IoP recount by pixel counting."""
    hit = [[np.count_nonzero(p & g) >= T * np.count_nonzero(p) for g in gts] for p in preds]
    tp = sum(any(hit[j][i] for j in range(len(preds))) for i in range(len(gts)))
    fp = sum(not any(row) for row in hit)
    return tp, fp, len(gts) - tp


def random_mask(rng, shape):
    m = np.zeros(shape, dtype=bool)
    for _ in range(rng.integers(1, 4)):
        r, c = rng.integers(0, shape[0]), rng.integers(0, shape[1])
        m[r:r + rng.integers(1, 20), c:c + rng.integers(1, 20)] = True
    if rng.random() < 0.3:
        m ^= rng.random(shape) < 0.05
    if not m.any():
        m[rng.integers(0, shape[0]), rng.integers(0, shape[1])] = True
    return m


@criterion(2, budget_s=30.0)
def test_c02_matching_oracle_equivalence():
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(1000):
        shape = (int(rng.integers(4, 65)), int(rng.integers(4, 65)))
        gts = [random_mask(rng, shape) for _ in range(rng.integers(0, 7))]
        preds = [random_mask(rng, shape) for _ in range(rng.integers(0, 7))]
        P, G = RegionSet.from_masks(preds, shape), RegionSet.from_masks(gts, shape)
        for T in (0.25, 0.5, 0.75, 1.0):
            m = match_regions(P, G, MatchConfig(T))
            assert (m.tp, m.fp, m.fn) == recount(preds, gts, T), (shape, T)
            checked += 1
    return f"{checked} (mask set, T) cases identical to exhaustive recount"


# ------------------------------------------------------------------ 3


@criterion(3, budget_s=5.0)
def test_c03_dice_gradient():
    rng = np.random.default_rng(3)
    h = 1e-6
    worst = 0.0
    for _ in range(200):
        p = rng.random((8, 8))
        t = (rng.random((8, 8)) > 0.5).astype(np.float64)
        _, g = dice_loss(p, t)
        fd = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            a, b = p.copy(), p.copy()
            a[idx] += h
            b[idx] -= h
            fd[idx] = (dice_loss(a, t)[0] - dice_loss(b, t)[0]) / (2 * h)
        rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-12)
        worst = max(worst, float(rel.max()))
    assert worst <= 1e-4
    return f"max relative error {worst:.2e} over 200 instances"


# ------------------------------------------------------------------ 4


@criterion(4, budget_s=5.0)
def test_c04_projection_round_trip():
    rng = np.random.default_rng(4)
    worst, total = 0.0, 0
    W, H = 160, 120
    for k in range(100):
        R = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
        cam = CameraModel.from_fov(W, H, float(rng.uniform(40, 100)), R, rng.uniform(-5, 5, 3))
        rows, cols = np.divmod(rng.choice(H * W, 100, replace=False), W)
        depth = np.zeros((H, W))
        depth[rows, cols] = rng.uniform(0.1, 20.0, 100)
        pc = backproject(depth, cam)
        u, v, _ = cam.project(pc.points)
        err = np.maximum(np.abs(u - pc.pixels[:, 1]), np.abs(v - pc.pixels[:, 0]))
        worst = max(worst, float(err.max()))
        total += len(pc)
        # collapse conserves every point binned into the grid
        origin = pc.points.min(axis=0) - 0.01
        dims = tuple(np.ceil((pc.points.max(axis=0) - origin) / 0.25).astype(int) + 1)
        counts, dropped = bin_to_voxels(pc, origin, 0.25, dims)
        assert dropped == 0
        col = height_collapse(counts)
        assert col.sum() == len(pc)
        ref, _, _ = np.histogram2d(pc.points[:, 0], pc.points[:, 1], bins=dims[:2],
                                   range=[[origin[0], origin[0] + 0.25 * dims[0]],
                                          [origin[1], origin[1] + 0.25 * dims[1]]])
        assert np.array_equal(col, ref.astype(np.int64))
    assert total == 10_000 and worst <= 1e-6
    return f"{total} pixels, max reprojection error {worst:.1e} px, point counts conserved"


# ------------------------------------------------------------------ 5


def random_voxel_scene(rng):
    dims = tuple(int(d) for d in rng.integers(10, 25, 3))
    occ = rng.random(dims) < rng.uniform(0.01, 0.06)
    grid = np.where(occ, rng.integers(1, 4, dims), 0).astype(np.int32)
    insts = tuple(Instance(i, "Table", "receptacle") for i in range(1, 4))
    return SceneSpec(grid, insts, 0.05, tuple(rng.uniform(-1, 1, 3)))


def random_free_camera(scene, rng):
    lo, hi = scene.origin_array, scene.extent
    while True:
        p = rng.uniform(lo + 0.05, hi - 0.05)
        if scene.is_free(p):
            target = rng.uniform(lo, hi)
            if np.linalg.norm(target - p) > 0.2:
                return CameraModel.look_at(p, target, 32, 32, float(rng.uniform(50, 100)))


@criterion(5, budget_s=60.0)
def test_c05_raycast_matches_brute_force():
    rng = np.random.default_rng(5)
    diag = 0.05 * np.sqrt(3)
    worst, valid = 0.0, 0
    for _ in range(50):
        scene = random_voxel_scene(rng)
        cam = random_free_camera(scene, rng)
        r = render(scene, cam)
        depth, _ = brute_depth(scene, cam)
        assert np.array_equal(r.depth > 0, depth > 0)
        ok = depth > 0
        if ok.any():
            worst = max(worst, float(np.abs(r.depth[ok] - depth[ok]).max()))
        valid += int(ok.sum())
    assert worst <= diag and valid > 0
    return f"{valid} valid pixels over 50 scenes, max depth gap {worst:.2e} m (bound {diag:.3f})"


# ------------------------------------------------------------------ 6


def flat_mask(n, shape=(20, 20)):
    m = np.zeros(shape[0] * shape[1], bool)
    m[:n] = True
    return m.reshape(shape)


@criterion(6)
def test_c06_pipeline_filter_rule(tmp_path):
    removed = Detection("Cushion", pixel_bbox_of(flat_mask(100)), 0.9, flat_mask(100))
    verdicts = []
    for n in (85, 91, 95):
        again = Detection("Cushion", pixel_bbox_of(flat_mask(n)), 0.9, flat_mask(n))
        assert iou(removed.mask, again.mask) == n / 100
        verdicts.append(verify_inpainting([removed], [again], [removed], 0.9))
    assert verdicts == ["keep", "discard", "discard"]
    images = read_image_manifest(write_fixture_set(tmp_path / "fx", 10, seed=0))
    trees = []
    for k, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"run{k}"
        RecordStore(out).write(run_pipeline(images, MockClients(0), seed=0, workers=workers))
        trees.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    assert trees[0] == trees[1] == trees[2] and len(trees[0]) > 2
    return f"IoU 0.85/0.91/0.95 -> {'/'.join(verdicts)}; {len(trees[0])} output files byte-identical across reruns"


# ------------------------------------------------------------------ 7


@criterion(7)
def test_c07_viewpoint_sampler(eval_table):
    scene, _ = make_mixed_episode(0, 7, priors=eval_table)
    objects = scene.instances_of(kind="object")
    assert objects
    kept = 0
    for inst in objects:
        assert len(candidates(scene, inst.id)) == len(RADII) * 36 == 144
        c = scene.centroid(inst.id)
        for cam in sample_viewpoints(scene, inst.id):
            dist = float(np.linalg.norm(cam.position - c))
            assert min(abs(dist - r) for r in (0.5, 1.0, 1.5, 2.0)) <= 1e-9
            assert coverage(render(scene, cam), inst.id) >= 0.05
            kept += 1
    assert kept > 0
    return f"{len(objects)} objects x 144 candidates, {kept} kept views all valid"


# ------------------------------------------------------------------ 8


@criterion(8)
def test_c08_prior_predictor_consistency(eval_table):
    pred = make_predictor("prior", table=eval_table)
    recs, trash = [], []
    for i in range(20):
        scene, _ = make_mixed_episode(i, 8, priors=eval_table)
        rng = np.random.default_rng([8, i])
        for s in make_view_samples(scene, f"{scene.name}.json", rng, views_per_object=2, table=eval_table):
            rec = evaluate_sample(s, pred.predict(sample_observation(s, scene), s.category))
            recs.append(rec)
            if s.category == "Trash Can":
                trash.append(rec)
    rep = aggregate(recs)
    assert rep.rsp == 1.0 and rep.counts["rsp"] > 0
    assert trash and all(r.surface.precision is None and r.surface.recall is None for r in trash)
    rest = aggregate([r for r in recs if all(r is not t for t in trash)])
    assert (rest.rsp, rest.rsr, rest.counts["rsp"], rest.counts["rsr"]) == (
        rep.rsp, rep.rsr, rep.counts["rsp"], rep.counts["rsr"])
    return f"RSP=1.0 over {rep.counts['rsp']} images; {len(trash)} Trash Can images excluded"


# ------------------------------------------------------------------ 9


def easy_suite(table, predictor, seed=0, n=50):
    out = []
    for i in range(n):
        scene, ep = make_easy_episode(i, seed, table)
        out.append(run_episode(scene, ep, predictor)[0])
    return out


@pytest.mark.slow
@criterion(9, budget_s=300.0)
def test_c09_oracle_easy_suite(eval_table):
    oracle = easy_suite(eval_table, OraclePredictor(eval_table))
    rate = sum(r.success for r in oracle) / len(oracle)
    zero = easy_suite(eval_table, ConstantPredictor(0.0))
    again = easy_suite(eval_table, OraclePredictor(eval_table))
    assert rate >= 0.8
    assert all(r.failure_mode == NAV for r in zero)
    assert [r.to_dict() for r in again] == [r.to_dict() for r in oracle]
    assert results_digest(again) == results_digest(oracle)
    return f"oracle success {100 * rate:.1f}% (>= 80%), zero predictor 100% nav_failure, rerun identical"


# ------------------------------------------------------------------ 10


SUMMARY_FORMAT = re.compile(
    r"Success: \d+\.\d% \(\d+/\d+\)\n"
    r"Navigation Failure: \d+\.\d% of failures \(\d+\)\n"
    r"Place Failure: \d+\.\d% of failures \(\d+\)\n"
    r"Incorrect SP Mask: \d+\.\d% of failures \(\d+\)"
)


@pytest.mark.slow
@criterion(10)
def test_c10_failure_taxonomy(eval_table):
    oracle = OraclePredictor(eval_table)
    results = []
    for i in range(200):
        scene, ep = make_mixed_episode(i, 10, priors=eval_table)
        results.append(run_episode(scene, ep, oracle)[0])
    for r in results:
        assert r.failure_mode in FAILURE_MODES
        assert r.success == (r.failure_mode == NONE)
    s = summarize(results)
    assert sum(s.counts.values()) == 200
    text = s.format()
    assert SUMMARY_FORMAT.fullmatch(text), text
    return "200 episodes, one mode each; " + " | ".join(text.splitlines())


# ------------------------------------------------------------------ 11


@criterion(11)
def test_c11_trained_model_numbers_not_targets():
    # headline figures need the trained network and the original scene assets; nothing to check here
    return "trained-model benchmark numbers are out of scope; criteria 1-10 stand in for them"
