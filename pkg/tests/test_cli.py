from __future__ import annotations

import csv
import json
import socket

import numpy as np
import pytest

from placebench.cli import EXIT_EXTERNAL, EXIT_INVALID, EXIT_OK, main
from placebench.maskio import save_heatmap_png
from placebench.predict import make_predictor
from placebench.scenesim.agent import state_is_free
from placebench.scenesim.generate import read_episodes
from placebench.scenesim.scene import SceneSpec
from placebench.viewdata import read_view_dataset, sample_observation


def run(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def gen(tmp_path_factory):
    root = tmp_path_factory.mktemp("gen")
    assert run("genscenes", "--count", 5, "--seed", 3, "--out", root, "--views-per-object", 1,
               "--image-size", "64x48") == EXIT_OK
    return root


@pytest.fixture(scope="module")
def easy(tmp_path_factory):
    root = tmp_path_factory.mktemp("easy")
    assert run("genscenes", "--count", 4, "--kind", "easy", "--seed", 11, "--out", root) == EXIT_OK
    return root


class TestGenscenes:
    def test_outputs(self, gen):
        assert len(list((gen / "scenes").glob("*.json"))) == 5
        assert len(read_episodes(gen / "episodes.jsonl")) == 5
        idx = json.loads((gen / "index.json").read_text())
        assert "episodes.jsonl" in idx and "views.jsonl" in idx

    def test_reproducible_across_workers(self, gen, tmp_path):
        assert run("genscenes", "--count", 5, "--seed", 3, "--out", tmp_path, "--views-per-object", 1,
                   "--image-size", "64x48", "--workers", 2) == EXIT_OK
        assert tree_bytes(tmp_path) == tree_bytes(gen)

    def test_seed_changes_output(self, gen, tmp_path):
        run("genscenes", "--count", 5, "--seed", 4, "--out", tmp_path, "--views-per-object", 1,
            "--image-size", "64x48")
        assert (tmp_path / "index.json").read_bytes() != (gen / "index.json").read_bytes()

    def test_start_poses_free(self, gen, easy):
        for root in (gen, easy):
            for ep in read_episodes(root / "episodes.jsonl"):
                assert state_is_free(SceneSpec.load(root / ep.scene_file), ep.start_state())

    def test_view_pairs_differ_on_removed_pixels(self, gen):
        from placebench.maskio import load_rgb_png

        for s in read_view_dataset(gen / "views.jsonl"):
            a = load_rgb_png(gen / "views" / f"{s.image_id}_with.png")
            b = load_rgb_png(gen / "views" / f"{s.image_id}_rgb.png")
            assert not ((a != b).any(-1) & ~s.gt.union()).any()

    def test_requires_seed(self, tmp_path):
        assert run("genscenes", "--count", 1, "--out", tmp_path) == EXIT_INVALID

    def test_bad_size(self, tmp_path):
        assert run("genscenes", "--seed", 1, "--out", tmp_path, "--image-size", "64by48") == EXIT_INVALID


class TestEval:
    def test_oracle_trp(self, gen, tmp_path, capsys):
        assert run("eval", "--in", gen / "views.jsonl", "--out", tmp_path) == EXIT_OK
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["trp"] == 1.0 and rep["rsp"] == 1.0 and rep["missing"] == []
        assert "T=0.5" in capsys.readouterr().out

    def test_zero_predictor(self, gen, tmp_path):
        assert run("eval", "--in", gen / "views.jsonl", "--out", tmp_path, "--predictor", "constant") == EXIT_OK
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["precision"] is None and rep["recall"] == 0.0 and rep["tp_total"] == 0

    def test_threshold_sweep(self, gen, tmp_path):
        args = ["eval", "--in", gen / "views.jsonl", "--out", tmp_path, "--predictor", "prior-full"]
        for t in (0.25, 0.5, 0.75):
            args += ["--threshold", t]
        assert run(*args) == EXIT_OK
        tps = [json.loads((tmp_path / f"report_t{t:g}.json").read_text())["tp_total"] for t in (0.25, 0.5, 0.75)]
        assert tps == sorted(tps, reverse=True)
        assert (tmp_path / "per_image_t0.25.csv").exists()

    def test_metric_selection(self, gen, tmp_path):
        assert run("eval", "--in", gen / "views.jsonl", "--out", tmp_path, "--metrics", "trp,rsr") == EXIT_OK
        rep = json.loads((tmp_path / "report.json").read_text())
        assert "trp" in rep and "rsr" in rep and "precision" not in rep
        assert run("eval", "--in", gen / "views.jsonl", "--out", tmp_path, "--metrics", "auc") == EXIT_INVALID

    def _write_oracle_heatmaps(self, gen, root, skip=0):
        root.mkdir()
        samples = read_view_dataset(gen / "views.jsonl")
        pred = make_predictor("oracle")
        for s in samples[skip:]:
            scene = SceneSpec.load(gen / s.scene_file)
            save_heatmap_png(pred.predict(sample_observation(s, scene), s.category), root / f"{s.image_id}.png")
        return samples

    def test_predictions_dir(self, gen, tmp_path):
        self._write_oracle_heatmaps(gen, tmp_path / "pred")
        assert run("eval", "--in", gen / "views.jsonl", "--out", tmp_path / "a",
                   "--predictions", tmp_path / "pred") == EXIT_OK
        assert run("eval", "--in", gen / "views.jsonl", "--out", tmp_path / "b") == EXIT_OK
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()

    def test_missing_predictions(self, gen, tmp_path, capsys):
        samples = self._write_oracle_heatmaps(gen, tmp_path / "pred", skip=1)
        rc = run("eval", "--in", gen / "views.jsonl", "--out", tmp_path / "o", "--predictions", tmp_path / "pred")
        assert rc == EXIT_INVALID
        rep = json.loads((tmp_path / "o" / "report.json").read_text())
        assert rep["missing"] == [samples[0].image_id]
        assert rep["counts"]["images"] == len(samples) - 1
        with open(tmp_path / "o" / "per_image.csv") as f:
            rows = {r["image_id"]: r for r in csv.DictReader(f)}
        assert rows[samples[0].image_id]["missing"] == "1"
        assert "no prediction" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path):
        assert run("eval", "--in", tmp_path / "none.jsonl", "--out", tmp_path) == EXIT_INVALID

    def test_bad_threshold(self, gen, tmp_path):
        assert run("eval", "--in", gen / "views.jsonl", "--out", tmp_path, "--threshold", 0) == EXIT_INVALID


class TestEpisodes:
    def test_zero_predictor_all_nav_failure(self, easy, tmp_path):
        assert run("episodes", "--in", easy / "episodes.jsonl", "--out", tmp_path,
                   "--predictor", "constant") == EXIT_OK
        rows = [json.loads(x) for x in (tmp_path / "results.jsonl").read_text().splitlines()]
        assert len(rows) == 4 and all(r["failure_mode"] == "nav_failure" for r in rows)

    def test_rerun_and_workers_identical(self, easy, tmp_path, capsys):
        assert run("episodes", "--in", easy / "episodes.jsonl", "--out", tmp_path / "a", "--trace") == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("Success: ") and "Navigation Failure" in out
        assert run("episodes", "--in", easy / "episodes.jsonl", "--out", tmp_path / "b", "--trace",
                   "--workers", 2) == EXIT_OK
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
        assert len(list((tmp_path / "a" / "traces").glob("*.jsonl"))) == 4

    def test_broken_scene_isolated(self, easy, tmp_path):
        root = tmp_path / "suite"
        root.mkdir()
        eps = (easy / "episodes.jsonl").read_text().splitlines()
        (root / "scenes").mkdir()
        for ep in read_episodes(easy / "episodes.jsonl"):
            (root / ep.scene_file).write_bytes((easy / ep.scene_file).read_bytes())
        first = read_episodes(easy / "episodes.jsonl")[0]
        (root / first.scene_file).write_text("{}")
        (root / "episodes.jsonl").write_text("\n".join(eps) + "\n")
        assert run("episodes", "--in", root / "episodes.jsonl", "--out", tmp_path / "o",
                   "--predictor", "constant") == EXIT_OK
        rows = {json.loads(x)["episode_id"]: json.loads(x)
                for x in (tmp_path / "o" / "results.jsonl").read_text().splitlines()}
        assert rows[first.episode_id]["failure_mode"] == "errored"
        assert sum(r["failure_mode"] == "nav_failure" for r in rows.values()) == 3

    def test_config_policy_override(self, easy, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"episodes": {"predictor": "constant"}, "policy": {"explore_steps": 3}}))
        assert run("episodes", "--in", easy / "episodes.jsonl", "--out", tmp_path / "o", "--config", cfg) == 0
        rows = [json.loads(x) for x in (tmp_path / "o" / "results.jsonl").read_text().splitlines()]
        assert all(r["steps"] <= 3 and r["failure_mode"] == "nav_failure" for r in rows)

    def test_config_errors(self, easy, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"episodes": {"wings": 2}}))
        assert run("episodes", "--in", easy / "episodes.jsonl", "--out", tmp_path, "--config", bad) == EXIT_INVALID
        bad.write_text("{")
        assert run("episodes", "--in", easy / "episodes.jsonl", "--out", tmp_path, "--config", bad) == EXIT_INVALID
        bad.write_text(json.dumps({"policy": {"explore_steps": -1}}))
        assert run("episodes", "--in", easy / "episodes.jsonl", "--out", tmp_path, "--config", bad) == EXIT_INVALID


class TestPipeline:
    def test_fixture_reproducible(self, tmp_path, capsys):
        assert run("pipeline", "--fixture", 10, "--seed", 0, "--out", tmp_path / "a") == EXIT_OK
        assert "processed 10" in capsys.readouterr().out
        assert run("pipeline", "--fixture", 10, "--seed", 0, "--out", tmp_path / "b", "--workers", 4) == EXIT_OK
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
        stats = json.loads((tmp_path / "a" / "stats.json").read_text())
        assert stats["kept"] + stats["filtered"] + stats["skipped"] == stats["processed"] == 10

    def test_echo_filters(self, tmp_path):
        assert run("pipeline", "--fixture", 4, "--seed", 0, "--out", tmp_path, "--clients", "mock-echo") == 0
        stats = json.loads((tmp_path / "stats.json").read_text())
        assert stats["kept"] == 0 and stats["filtered"] == 4

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "m.jsonl").write_text("")
        assert run("pipeline", "--in", tmp_path / "m.jsonl", "--seed", 0, "--out", tmp_path / "o") == EXIT_OK
        assert json.loads((tmp_path / "o" / "stats.json").read_text())["processed"] == 0

    def test_unreachable_socket(self, tmp_path, capsys):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        rc = run("pipeline", "--fixture", 2, "--seed", 0, "--out", tmp_path, "--clients", f"socket:127.0.0.1:{port}")
        assert rc == EXIT_EXTERNAL
        assert "cannot reach" in capsys.readouterr().err

    def test_validation(self, tmp_path):
        assert run("pipeline", "--fixture", 2, "--out", tmp_path) == EXIT_INVALID
        assert run("pipeline", "--seed", 0, "--out", tmp_path) == EXIT_INVALID
        assert run("pipeline", "--fixture", 2, "--seed", 0, "--out", tmp_path, "--clients", "gpu") == EXIT_INVALID
        assert run("pipeline", "--fixture", 2, "--seed", 0, "--out", tmp_path, "--workers", 0) == EXIT_INVALID


class TestReport:
    def test_each_output_kind(self, easy, tmp_path, capsys):
        run("episodes", "--in", easy / "episodes.jsonl", "--out", tmp_path / "ep", "--predictor", "constant")
        run("pipeline", "--fixture", 2, "--seed", 0, "--out", tmp_path / "pl")
        capsys.readouterr()
        assert run("report", tmp_path / "ep", tmp_path / "pl", "--out", tmp_path / "r") == EXIT_OK
        out = capsys.readouterr().out
        assert "Success: 0.0% (0/4)" in out and "processed 2" in out
        assert (tmp_path / "r" / "report.txt").read_text().strip() == out.strip()

    def test_eval_report(self, gen, tmp_path, capsys):
        run("eval", "--in", gen / "views.jsonl", "--out", tmp_path)
        capsys.readouterr()
        assert run("report", tmp_path) == EXIT_OK
        assert "TRP" in capsys.readouterr().out

    def test_missing_path(self, tmp_path):
        assert run("report", tmp_path / "nothing") == EXIT_INVALID


def test_unknown_command():
    assert run("fly") == EXIT_INVALID


def test_help_exits_zero(capsys):
    assert run("--help") == EXIT_OK
    assert "genscenes" in capsys.readouterr().out


def test_heatmap_png_precision(tmp_path):
    from placebench.maskio import load_heatmap_png

    h = np.linspace(0, 1, 48 * 64).reshape(48, 64)
    save_heatmap_png(h, tmp_path / "h.png")
    assert np.abs(load_heatmap_png(tmp_path / "h.png") - h).max() <= 0.5 / 65535 + 1e-12
