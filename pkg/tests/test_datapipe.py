from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from placebench.datapipe import (
    ClientError, ClientUnavailable, Detection, MockClients, ModelServer, PipelineConfig, PipelineRecord, RecordStore,
    SocketClients, box_iou, build_record, make_clients, pick_best_mask, read_image_manifest, run_pipeline,
    sam_prompt, select_inpaint_targets, verify_inpainting, write_fixture_set,
)
from placebench.datapipe.clients import decode_image, encode_image, handle_request, parse_address
from placebench.datapipe.pipeline import image_rng, process_image
from placebench.geometry import BBox, pixel_bbox_of


def det(cat, x0=0, y0=0, x1=None, y1=None, score=0.9, mask=None):
    x1 = x0 + 9 if x1 is None else x1
    y1 = y0 + 9 if y1 is None else y1
    return Detection(cat, BBox(x0, y0, x1, y1, normalized=False), score, mask)


def mask_det(cat, mask):
    return Detection(cat, pixel_bbox_of(mask), 0.9, mask)


def flat_mask(n, shape=(20, 20), start=0):
    m = np.zeros(shape[0] * shape[1], bool)
    m[start:start + n] = True
    return m.reshape(shape)


@pytest.fixture(scope="module")
def fixture10(tmp_path_factory):
    root = tmp_path_factory.mktemp("fx")
    return read_image_manifest(write_fixture_set(root, 10, seed=0))


class TestDetection:
    def test_validation(self):
        with pytest.raises(ValueError):
            det("Cushion", score=1.5)
        with pytest.raises(ValueError):
            det("Spaceship")
        with pytest.raises(ValueError):
            Detection("Vase", BBox(0.1, 0.1, 0.2, 0.2), 0.5)

    def test_within(self):
        assert det("Vase", 0, 0, 9, 9).within((10, 10))
        assert not det("Vase", 0, 0, 10, 9).within((10, 10))

    def test_round_trip(self, rng):
        m = rng.random((6, 8)) > 0.5
        d = Detection("plotted plant", BBox(1, 2, 5, 4, normalized=False), 0.25, m)
        back = Detection.from_dict(json.loads(json.dumps(d.to_dict())))
        assert back.category == "Potted Plant" and back.bbox == d.bbox and np.array_equal(back.mask, m)


class TestPrompt:
    def test_examples(self):
        assert sam_prompt(det("Vase", 0, 0, 10, 10)) == (5, 5)
        assert sam_prompt(det("Vase", 3, 3, 3, 9)) == (3, 6)
        assert sam_prompt(det("Vase", 7, 4, 7, 4)) == (7, 4)

    def test_half_rounds_up(self):
        assert sam_prompt(det("Vase", 0, 0, 5, 7)) == (3, 4)

    @given(st.integers(0, 200), st.integers(0, 200), st.integers(0, 50), st.integers(0, 50))
    def test_inside_box(self, x, y, w, h):
        px, py = sam_prompt(det("Vase", x, y, x + w, y + h))
        assert x <= px <= x + w and y <= py <= y + h
        assert abs(px - (2 * x + w) / 2) <= 0.5 and abs(py - (2 * y + h) / 2) <= 0.5


class TestPickBestMask:
    def test_argmax(self):
        ms = [np.full((2, 2), i == k) for k in range(3) for i in [1]]
        assert np.array_equal(pick_best_mask(list(zip(ms, (0.2, 0.9, 0.5)))), ms[1])

    def test_tie_first(self):
        ms = [np.eye(2, dtype=bool), np.ones((2, 2), bool), np.zeros((2, 2), bool)]
        assert np.array_equal(pick_best_mask([(m, 0.4) for m in ms]), ms[0])

    def test_errors(self):
        with pytest.raises(ValueError):
            pick_best_mask([])
        with pytest.raises(ValueError):
            pick_best_mask([(np.ones((2, 2)), 0.1)])

    def test_mock_scores(self, fixture10):
        mc = MockClients(seed=4)
        for _, img in fixture10[:5]:
            for d in mc.detect(img):
                cands = mc.segment(img, sam_prompt(d))
                best = max(range(3), key=lambda i: (cands[i][1], -i))
                assert np.array_equal(pick_best_mask(cands), cands[best][0])


class TestSelectTargets:
    def test_single_cushion(self):
        c = det("Cushion")
        t, d = select_inpaint_targets([c], "Cushion", np.random.default_rng(0))
        assert t == [c] and d == []

    def test_reproducible(self):
        dets = [det("Vase", i) for i in range(2)] + [det("Lamp", 10 + i) for i in range(5)]
        a = select_inpaint_targets(dets, "Vase", np.random.default_rng(42))
        b = select_inpaint_targets(dets, "Vase", np.random.default_rng(42))
        assert [id(x) for x in a[0]] == [id(x) for x in b[0]] and [id(x) for x in a[1]] == [id(x) for x in b[1]]
        assert 1 <= len(a[1]) <= 4 and all(x.category == "Lamp" for x in a[1])

    def test_ranges_over_seeds(self):
        dets = [det("Vase", i) for i in range(3)] + [det("Lamp", 10 + i) for i in range(5)]
        sizes, n_dis = set(), set()
        for s in range(200):
            t, d = select_inpaint_targets(dets, "Vase", np.random.default_rng(s))
            assert t and all(x.category == "Vase" for x in t)
            assert len({id(x) for x in d}) == len(d)
            sizes.add(len(t))
            n_dis.add(len(d))
        assert sizes == {1, 2, 3} and n_dis == {1, 2, 3, 4}

    def test_fewer_distractors_available(self):
        dets = [det("Vase"), det("Laptop", 20)]
        for s in range(20):
            assert len(select_inpaint_targets(dets, "Vase", np.random.default_rng(s))[1]) == 1

    def test_missing_category(self):
        with pytest.raises(ValueError):
            select_inpaint_targets([det("Vase")], "Cushion", np.random.default_rng(0))


class TestVerify:
    def test_iou_fixture(self):
        removed = mask_det("Cushion", flat_mask(100))
        verdicts = []
        for n in (85, 91, 95):
            after = mask_det("Cushion", flat_mask(n))
            verdicts.append(verify_inpainting([removed], [after], [removed]))
        assert verdicts == ["keep", "discard", "discard"]

    def test_examples(self):
        removed = mask_det("Cushion", flat_mask(100))
        assert verify_inpainting([removed], [], [removed]) == "keep"
        assert verify_inpainting([removed], [mask_det("Cushion", flat_mask(50))], [removed]) == "keep"
        # a same-place detection of another category does not count
        assert verify_inpainting([removed], [mask_det("Vase", flat_mask(100))], [removed]) == "keep"

    def test_strict_threshold(self):
        removed = mask_det("Cushion", flat_mask(100))
        after = mask_det("Cushion", flat_mask(90))
        assert verify_inpainting([removed], [after], [removed], 0.9) == "keep"

    def test_box_fallback_logged(self):
        removed = det("Vase", 0, 0, 9, 9)
        after = det("Vase", 0, 0, 9, 8)
        log = []
        assert verify_inpainting([removed], [after], [removed], log=log) == "keep"
        assert log == [{"check": "Vase", "basis": "box", "iou": 0.9}]
        assert box_iou(removed.bbox, after.bbox) == 0.9

    def test_removed_must_be_detected(self):
        with pytest.raises(ValueError):
            verify_inpainting([], [], [det("Vase")])

    @given(arrays(np.bool_, (8, 8)), arrays(np.bool_, (8, 8)), st.floats(0, 1), st.floats(0, 1))
    def test_threshold_monotone(self, a, b, t1, t2):
        if not a.any() or not b.any():
            return
        removed = mask_det("Vase", a)
        after = [mask_det("Vase", b)]
        lo, hi = sorted((t1, t2))
        if verify_inpainting([removed], after, [removed], lo) == "keep":
            assert verify_inpainting([removed], after, [removed], hi) == "keep"


class TestBuildRecord:
    def test_disjoint_areas(self):
        a = flat_mask(30)
        b = flat_mask(50, start=100)
        rec = build_record("img", "Cushion", [a, b], ["img__v0"])
        assert rec.sp_annotation.sum() == 80

    def test_single(self):
        a = flat_mask(30)
        assert np.array_equal(build_record("i", "Vase", [a], ["v"]).sp_annotation, a)

    def test_overlap_union(self, rng):
        ms = [rng.random((12, 12)) > 0.6 for _ in range(4)]
        pixels = set()
        for m in ms:
            pixels |= set(map(tuple, np.argwhere(m)))
        assert build_record("i", "Vase", ms, ["v"]).sp_annotation.sum() == len(pixels)

    def test_errors(self):
        with pytest.raises(ValueError):
            build_record("i", "Vase", [], ["v"])
        with pytest.raises(ValueError):
            build_record("i", "Vase", [flat_mask(3)], [])
        with pytest.raises(ValueError):
            build_record("i", "Couch", [flat_mask(3)], ["v"])

    def test_record_round_trip(self):
        rec = build_record("i", "Vase", [flat_mask(7)], ["v0", "v1"], ["Lamp"], [{"op": "detect", "n": 2}])
        back = PipelineRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
        assert back.to_dict() == rec.to_dict()


class _FlakySegment(MockClients):
    def segment(self, image, point):
        if image.mean() > 0 and int(image[0, 0].sum()) % 2 == 0:
            raise ClientError("segmenter down")
        return super().segment(image, point)


class TestPipeline:
    def test_golden_run(self, fixture10):
        res = run_pipeline(fixture10, MockClients(0), seed=0)
        s = res.stats
        assert (s.processed, s.kept, s.filtered, s.skipped) == (10, 10, 0, 0)
        assert all(len(r.variant_ids) == 2 for r in res.records)
        again = run_pipeline(fixture10, MockClients(0), seed=0)
        assert [r.to_dict() for r in again.records] == [r.to_dict() for r in res.records]

    def test_counters(self, fixture10):
        for clients in (MockClients(0), MockClients(0, inpaint_mode="echo"), MockClients(0, detect_nothing=True),
                        _FlakySegment(0)):
            s = run_pipeline(fixture10, clients, seed=3).stats
            assert s.kept + s.filtered + s.skipped == s.processed == 10
            assert s.kept + s.filtered <= s.inpainted <= s.detected

    def test_detector_empty(self, fixture10):
        res = run_pipeline(fixture10, MockClients(0, detect_nothing=True), seed=0)
        assert res.records == [] and res.stats.skip_reasons == {"no-detection": 10}

    def test_echo_inpainter(self, fixture10):
        res = run_pipeline(fixture10, MockClients(0, inpaint_mode="echo"), seed=0)
        assert res.records == [] and res.stats.filtered == 10

    def test_client_errors_skip(self, fixture10):
        res = run_pipeline(fixture10, _FlakySegment(0), seed=0)
        assert res.stats.skip_reasons.get("client-error", 0) >= 1
        assert res.stats.processed == 10

    def test_annotation_inside_before_detections(self, fixture10):
        mc = MockClients(1)
        res = run_pipeline(fixture10, mc, seed=5)
        images = dict(fixture10)
        for rec in res.records:
            before = [d for d in mc.detect(images[rec.source_id]) if d.category == rec.category]
            cover = np.logical_or.reduce([d.mask for d in before])
            assert rec.sp_annotation.any() and not (rec.sp_annotation & ~cover).any()

    def test_distractors_not_annotated(self, fixture10):
        res = run_pipeline(fixture10, MockClients(0), seed=0)
        recs = [r for r in res.records if r.distractors]
        assert recs and all(rec.category not in rec.distractors for rec in recs)

    def test_order_and_workers(self, fixture10):
        a = run_pipeline(fixture10, MockClients(0), seed=9, workers=1)
        b = run_pipeline(list(reversed(fixture10)), MockClients(0), seed=9, workers=3)
        assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]
        assert a.stats == b.stats

    def test_seed_changes_output(self, fixture10):
        a = run_pipeline(fixture10, MockClients(0), seed=1)
        b = run_pipeline(fixture10, MockClients(0), seed=2)
        assert [r.to_dict() for r in a.records] != [r.to_dict() for r in b.records]

    def test_provenance_lists_calls(self, fixture10):
        rec = run_pipeline(fixture10[:1], MockClients(0), seed=0).records[0]
        ops = [p["op"] for p in rec.provenance]
        assert ops[:2] == ["query", "detect"] and "inpaint" in ops and ops.count("augment") == 2
        assert all("seed" in p for p in rec.provenance if p["op"] in ("query", "inpaint", "augment"))

    def test_duplicate_ids(self, fixture10):
        with pytest.raises(ValueError):
            run_pipeline([fixture10[0], fixture10[0]], MockClients(0))

    def test_store_bytes(self, fixture10, tmp_path):
        for k, workers in enumerate((1, 4)):
            RecordStore(tmp_path / str(k)).write(run_pipeline(fixture10, MockClients(0), seed=0, workers=workers))
        for name in ("manifest.jsonl", "stats.json"):
            assert (tmp_path / "0" / name).read_bytes() == (tmp_path / "1" / name).read_bytes()
        pngs = sorted(p.name for p in (tmp_path / "0" / "images").iterdir())
        assert len(pngs) == 20
        assert all((tmp_path / "0" / "images" / n).read_bytes() == (tmp_path / "1" / "images" / n).read_bytes()
                   for n in pngs)
        recs = RecordStore(tmp_path / "0").read()
        assert len(recs) == 10
        (tmp_path / "0" / "images" / pngs[0]).unlink()
        with pytest.raises(FileNotFoundError):
            RecordStore(tmp_path / "0").read()

    def test_image_rng_keyed_by_id(self):
        assert image_rng(1, "a").random() == image_rng(1, "a").random()
        assert image_rng(1, "a").random() != image_rng(1, "b").random()

    def test_process_image_status(self, fixture10):
        iid, img = fixture10[0]
        out = process_image(iid, img, MockClients(0), PipelineConfig(), 0)
        assert out.status == "kept" and out.detected and out.inpainted


class TestClients:
    def test_mock_deterministic(self, fixture10):
        _, img = fixture10[0]
        a, b = MockClients(3), MockClients(3)
        da, db = a.detect(img), b.detect(img)
        assert [d.to_dict() for d in da] == [d.to_dict() for d in db]
        pt = sam_prompt(da[0])
        assert [s for _, s in a.segment(img, pt)] == [s for _, s in b.segment(img, pt)]
        assert np.array_equal(a.augment(img, 5), b.augment(img, 5))

    def test_ring_inpaint_removes_object(self, fixture10):
        _, img = fixture10[0]
        mc = MockClients(0)
        d = mc.detect(img)[0]
        out = mc.inpaint(img, d.mask)
        assert not (out[~d.mask] != img[~d.mask]).any()
        assert len({tuple(v) for v in out[d.mask]}) == 1

    def test_segment_outside(self, fixture10):
        with pytest.raises(ClientError):
            MockClients().segment(fixture10[0][1], (1000, 0))

    def test_image_codec(self, rng):
        img = rng.integers(0, 256, (7, 9, 3)).astype(np.uint8)
        assert np.array_equal(decode_image(encode_image(img)), img)

    def test_handle_request_errors(self, rng):
        img = encode_image(np.zeros((4, 4, 3), np.uint8))
        assert handle_request(MockClients(), {"id": 1, "op": "fly", "image": img})["ok"] is False
        assert handle_request(MockClients(), {"id": 2, "op": "detect"})["ok"] is False
        assert handle_request(MockClients(), {"id": 3, "op": "detect", "image": img}) == {
            "id": 3, "ok": True, "detections": []}

    def test_socket_matches_mock(self, fixture10):
        server = ModelServer(MockClients(0))
        server.start()
        try:
            with SocketClients(server.address) as sc:
                via_socket = run_pipeline(fixture10, sc, seed=0, workers=2)
        finally:
            server.stop()
        local = run_pipeline(fixture10, MockClients(0), seed=0)
        assert [r.to_dict() for r in via_socket.records] == [r.to_dict() for r in local.records]

    def test_unreachable(self):
        import socket

        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        with pytest.raises(ClientUnavailable):
            SocketClients(f"127.0.0.1:{port}")

    def test_make_clients(self):
        assert make_clients("mock-echo").inpaint_mode == "echo"
        assert make_clients("mock-empty").detect_nothing
        with pytest.raises(ValueError):
            make_clients("gpu")
        with pytest.raises(ValueError):
            parse_address("localhost")
