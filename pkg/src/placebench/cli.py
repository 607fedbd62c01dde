"""Command line: ``placebench eval|episodes|genscenes|pipeline|report|serve``.

Exit codes: 0 success, 1 validation error, 2 external-dependency failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

log = logging.getLogger("placebench")

EXIT_OK, EXIT_INVALID, EXIT_EXTERNAL = 0, 1, 2
MAX_MISSING_FRACTION = 0.01


class UsageError(Exception):
    """Bad input; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("image size must be positive")
    return w, h


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_index(root: Path, name: str = "index.json") -> Path:
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.name != name)
    idx = {str(p.relative_to(root)): _sha256(p) for p in files}
    out = root / name
    out.write_text(json.dumps(idx, indent=1, sort_keys=True) + "\n")
    return out


def _map(fn, items, workers: int):
    """``fn`` over ``items`` in order, in worker processes when ``workers > 1``."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need_seed(args):
    if args.seed is None:
        raise UsageError("--seed is required for this command")
    return int(args.seed)


def _policy_config(args):
    from .policy import PolicyConfig

    return PolicyConfig.from_dict(getattr(args, "policy", None) or {})


def _predictor(args):
    from .predict import FilePredictor, make_predictor, priors

    if args.predictions:
        return FilePredictor(Path(args.predictions))
    kw = {}
    if args.table and args.predictor in ("oracle", "prior", "prior-full"):
        kw["table"] = priors.load_table(args.table)
    return make_predictor(args.predictor, **kw)


# ------------------------------------------------------------------ genscenes


def _gen_one(job):
    from .predict import priors
    from .scenesim.generate import make_easy_episode, make_mixed_episode
    from .viewdata import make_view_samples

    index, seed, kind, views_per_object, size = job
    table = priors.load_table(priors.EVAL)
    if kind == "easy":
        scene, ep = make_easy_episode(index, seed, table)
    else:
        scene, ep = make_mixed_episode(index, seed, priors=table)
    scene_file = f"scenes/{scene.name}.json"
    ep = replace(ep, scene_file=scene_file)
    views = []
    if views_per_object > 0:
        rng = np.random.default_rng([seed, index, 1])
        views = make_view_samples(scene, scene_file, rng, size, views_per_object, table, with_images=True)
    return scene, ep, views


def cmd_genscenes(args) -> int:
    from .scenesim.generate import write_episodes
    from .viewdata import write_view_dataset

    seed = _need_seed(args)
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    out = _out_dir(args)
    (out / "scenes").mkdir(exist_ok=True)
    jobs = [(i, seed, args.kind, args.views_per_object, tuple(args.image_size)) for i in range(args.count)]
    made = _map(_gen_one, jobs, args.workers)
    episodes, views = [], []
    for scene, ep, vs in made:
        scene.save(out / ep.scene_file)
        episodes.append(ep)
        views.extend(vs)
    write_episodes(episodes, out / "episodes.jsonl")
    write_view_dataset(views, out)
    _write_index(out)
    print(f"wrote {len(made)} scenes, {len(episodes)} episodes, {len(views)} views to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ episodes


def _episode_job(job):
    from .policy.episode import ERRORED, EpisodeResult, run_episode
    from .scenesim.scene import SceneSpec

    ep, root, args_d = job
    ns = argparse.Namespace(**args_d)
    try:
        scene = SceneSpec.load(Path(root) / ep.scene_file)
        res, trace = run_episode(scene, ep, _predictor(ns), _policy_config(ns), keep_trace=ns.trace)
        return res, trace.rows
    except Exception as e:  # isolate one bad episode from the batch
        log.error("episode %s errored: %s", ep.episode_id, e)
        return EpisodeResult(ep.episode_id, False, ERRORED, 0, reason=f"{type(e).__name__}: {e}"), []


def cmd_episodes(args) -> int:
    from .policy.episode import results_digest, summarize
    from .scenesim.generate import read_episodes

    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"no episode manifest at {path}")
    episodes = sorted(read_episodes(path), key=lambda e: e.episode_id)
    if len({e.episode_id for e in episodes}) != len(episodes):
        raise UsageError("duplicate episode ids")
    _policy_config(args)  # validate before spawning work
    out = _out_dir(args)
    args_d = {k: getattr(args, k) for k in ("predictor", "predictions", "table", "policy", "trace")}
    done = _map(_episode_job, [(e, str(path.parent), args_d) for e in episodes], args.workers)
    results = [r for r, _ in done]
    with open(out / "results.jsonl", "w") as f:
        for r in results:
            f.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    if args.trace:
        (out / "traces").mkdir(exist_ok=True)
        for r, rows in done:
            with open(out / "traces" / f"{r.episode_id}.jsonl", "w") as f:
                for row in rows:
                    f.write(json.dumps(row, sort_keys=True) + "\n")
    summary = summarize(results)
    report = summary.to_dict()
    report["digest"] = results_digest(results)
    (out / "summary.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    text = summary.format()
    (out / "summary.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


# ------------------------------------------------------------------ eval


METRIC_NAMES = ("precision", "recall", "trp", "rsp", "rsr")


def cmd_eval(args) -> int:
    from .metrics import aggregate, write_per_image_csv
    from .scenesim.scene import SceneSpec
    from .viewdata import evaluate_sample, read_view_dataset, sample_observation

    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"no view manifest at {path}")
    samples = read_view_dataset(path)
    metrics = [m.strip().lower() for m in args.metrics.split(",") if m.strip()]
    bad = sorted(set(metrics) - set(METRIC_NAMES))
    if bad:
        raise UsageError(f"unknown metrics {bad}; choose from {', '.join(METRIC_NAMES)}")
    thresholds = args.threshold or [0.5]
    if any(not 0.0 < t <= 1.0 for t in thresholds):
        raise UsageError("thresholds must lie in (0, 1]")
    out = _out_dir(args)
    pred = _predictor(args)
    scenes: dict = {}
    heats, missing = {}, []
    for s in samples:
        if s.scene_file not in scenes:
            scenes[s.scene_file] = SceneSpec.load(path.parent / s.scene_file)
        obs = sample_observation(s, scenes[s.scene_file])
        try:
            heats[s.image_id] = pred.predict(obs, s.category)
        except FileNotFoundError:
            missing.append(s.image_id)
    flagged = {i: {"missing": 1} for i in missing}
    sweep = len(thresholds) > 1
    summary = {}
    for t in thresholds:
        recs = [evaluate_sample(s, heats[s.image_id], t, args.tau) for s in samples if s.image_id in heats]
        rep = aggregate(recs).to_dict()
        body = {k: rep[k] for k in metrics}
        body.update(counts=rep["counts"], threshold=t, missing=sorted(missing),
                    tp_total=sum(r.sp.counts.tp for r in recs))
        suffix = f"_t{t:g}" if sweep else ""
        (out / f"report{suffix}.json").write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
        rows = recs + [_missing_record(i) for i in missing]
        write_per_image_csv(sorted(rows, key=lambda r: r.image_id), out / f"per_image{suffix}.csv", flagged)
        summary[f"{t:g}"] = body
    for t, body in summary.items():
        vals = "  ".join(f"{k}={_fmt(body[k])}" for k in metrics)
        print(f"T={t}  {vals}  (images {body['counts']['images']}, tp {body['tp_total']})")
    if missing:
        print(f"{len(missing)} of {len(samples)} images have no prediction", file=sys.stderr)
        if len(missing) > MAX_MISSING_FRACTION * len(samples):
            return EXIT_INVALID
    return EXIT_OK


def _missing_record(image_id):
    from .metrics import ImageRecord

    return ImageRecord(image_id)


def _fmt(v) -> str:
    return "undefined" if v is None else f"{v:.4f}"


# ------------------------------------------------------------------ pipeline


def cmd_pipeline(args) -> int:
    from .datapipe import (
        ClientUnavailable, PipelineConfig, RecordStore, make_clients, read_image_manifest, run_pipeline,
        write_fixture_set,
    )

    seed = _need_seed(args)
    out = _out_dir(args)
    if args.input is None:
        if args.fixture is None:
            raise UsageError("give --in MANIFEST or --fixture N")
        manifest = write_fixture_set(out / "fixture", args.fixture, seed)
    else:
        manifest = Path(args.input)
        if not manifest.exists():
            raise UsageError(f"no image manifest at {manifest}")
    images = read_image_manifest(manifest)
    cfg = PipelineConfig(args.iou_threshold, args.variants, args.noise)
    try:
        clients = make_clients(args.clients, seed)
    except ClientUnavailable as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EXTERNAL
    except ValueError as e:
        raise UsageError(str(e)) from e
    try:
        result = run_pipeline(images, clients, cfg, seed, args.workers)
    finally:
        if hasattr(clients, "close"):
            clients.close()
    RecordStore(out).write(result)
    print(result.stats.format())
    if result.stats.skip_reasons:
        print("skips: " + ", ".join(f"{k} {v}" for k, v in sorted(result.stats.skip_reasons.items())))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .datapipe import MockClients, ModelServer

    srv = ModelServer(MockClients(args.seed or 0), args.host, args.port)
    print(f"serving mock model clients on {srv.address}", flush=True)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()
    return EXIT_OK


# ------------------------------------------------------------------ report


def report_text(path: Path) -> str:
    """Human-readable summary of an episodes, eval or pipeline output (file or directory)."""
    from .policy.episode import EpisodeResult, summarize

    if path.is_dir():
        for name in ("results.jsonl", "report.json", "stats.json"):
            if (path / name).exists():
                return report_text(path / name)
        reports = sorted(path.glob("report_t*.json"))
        if reports:
            return "\n".join(report_text(p) for p in reports)
        raise UsageError(f"nothing to report in {path}")
    if path.suffix == ".jsonl":
        rows = [json.loads(x) for x in path.read_text().splitlines() if x.strip()]
        return summarize([EpisodeResult.from_dict(r) for r in rows]).format()
    data = json.loads(path.read_text())
    if "kept" in data and "processed" in data:
        return (f"processed {data['processed']} | detected {data['detected']} | inpainted {data['inpainted']} | "
                f"filtered {data['filtered']} | kept {data['kept']} | skipped {data['skipped']}")
    shown = [k for k in METRIC_NAMES if k in data]
    lines = [f"T={data.get('threshold', 0.5):g}"]
    lines += [f"  {k.upper():<9} {_fmt(data[k])}  (over {data.get('counts', {}).get(k, '?')} images)" for k in shown]
    return "\n".join(lines)


def cmd_report(args) -> int:
    texts = []
    for p in args.paths:
        p = Path(p)
        if not p.exists():
            raise UsageError(f"no such path {p}")
        texts.append(report_text(p))
    text = "\n\n".join(texts)
    print(text)
    if args.out:
        out = _out_dir(args)
        (out / "report.txt").write_text(text + "\n")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="global seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--config", default=None, help="JSON config with per-command defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    from .predict import KINDS

    common = _common()
    ap = _Parser(prog="placebench", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def predictor_args(p, default):
        p.add_argument("--predictor", choices=KINDS, default=default)
        p.add_argument("--predictions", default=None, help="directory of <image_id>.png heatmaps")
        p.add_argument("--table", choices=("eval", "baseline"), default=None,
                       help="prior table for oracle/prior predictors")

    p = sub.add_parser("eval", parents=[common], help="score SP heatmaps on a view dataset")
    p.add_argument("--in", dest="input", required=True, help="views.jsonl from genscenes")
    predictor_args(p, "oracle")
    p.add_argument("--metrics", default=",".join(METRIC_NAMES))
    p.add_argument("--threshold", type=float, action="append", help="IoP threshold T (repeat to sweep)")
    p.add_argument("--tau", type=float, default=0.5, help="heatmap binarization level")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("episodes", parents=[common], help="run placement episodes")
    p.add_argument("--in", dest="input", required=True, help="episodes.jsonl from genscenes")
    predictor_args(p, "oracle")
    p.add_argument("--trace", action="store_true", help="write per-step traces")
    p.set_defaults(func=cmd_episodes, policy=None)

    p = sub.add_parser("genscenes", parents=[common], help="generate scenes, episodes and view pairs")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--kind", choices=("mixed", "easy"), default="mixed")
    p.add_argument("--views-per-object", type=int, default=2)
    p.add_argument("--image-size", type=_size, default=(160, 120), help="view size WxH")
    p.set_defaults(func=cmd_genscenes)

    p = sub.add_parser("pipeline", parents=[common], help="run the inpainting data pipeline")
    p.add_argument("--in", dest="input", default=None, help="image manifest (JSON lines)")
    p.add_argument("--fixture", type=int, default=None, help="generate N fixture images instead")
    p.add_argument("--clients", default="mock", help="mock | mock-echo | mock-empty | socket:HOST:PORT")
    p.add_argument("--iou-threshold", type=float, default=0.9)
    p.add_argument("--variants", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.05)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", parents=[common], help="summarize outputs of other commands")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", parents=[common], help="serve mock model clients over a socket")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv, args):
    """Re-parse with defaults from ``--config``: ``{"defaults": {...}, "<command>": {...}, "policy": {...}}``."""
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {args.config}: {e}") from e
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    sub = ap._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    overrides = {**cfg.get("defaults", {}), **cfg.get(args.command, {})}
    unknown = sorted(set(k.replace("-", "_") for k in overrides) - known)
    if unknown:
        raise UsageError(f"unknown settings for {args.command}: {unknown}")
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
    if "policy" in cfg:
        sub.set_defaults(policy=cfg["policy"])
    return ap.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            args = _apply_config(ap, argv, args)
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        return args.func(args)
    except UsageError as e:
        print(f"placebench: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"placebench: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
