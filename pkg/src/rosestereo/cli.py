"""Command-line entry point: ``rosestereo gen|run|eval|selftest|bench``.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 selftest failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import pipeline
from .detect import blob_detect
from .errors import RoseStereoError
from .evaluation import depth_csv, detection_csv, oracle_detections
from .scenegen.dataset import read_dataset
from .scenegen.render import SceneSpec, build_layout, render_layout
from .selftest import format_table, run_selftest
from .stereomatch import (
    METHODS,
    coarse_search,
    grayscale,
    naive_strip_scores,
    refine_subpixel,
    strip_scores,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SELFTEST = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 by default; usage errors here are 1
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of flat dotted keys")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rosestereo", description="Synthetic stereo flower scenes, detection, matching and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="render a synthetic stereo dataset")
    _add_common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--augment", action="store_true", help="apply photometric augmentation")

    p = sub.add_parser("run", help="detect and match one split of a dataset")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--detector", choices=pipeline.DETECTORS, default=None)
    p.add_argument("--method", choices=METHODS, default=None)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default=None)
    p.add_argument("--dump-heatmaps", action="store_true")

    p = sub.add_parser("eval", help="score run outputs against ground truth")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--run", type=Path, required=True, help="run output directory")
    p.add_argument("--out", type=Path, default=None, help="report directory (default: the run dir)")

    p = sub.add_parser("selftest", help="run built-in numeric checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb-gradient", type=float, default=0.0, help=argparse.SUPPRESS)

    p = sub.add_parser("bench", help="time pipeline stages and the matching kernel")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default=None)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--max-samples", type=int, default=5)
    p.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    return parser


def _config(args, **flags) -> dict:
    overrides = {"jobs": getattr(args, "jobs", None), **flags}
    cfg = cfgmod.load_config(getattr(args, "config", None), overrides)
    if cfg["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    return cfg


def cmd_gen(args) -> int:
    cfg = _config(args, count=args.count, seed=args.seed)
    if args.augment:
        cfg["augment.enabled"] = True
    if cfg["count"] < 0:
        raise UsageError("--count must be >= 0")
    manifest = pipeline.generate_dataset(args.out, cfg, cfg["seed"], cfg["count"], cfg["jobs"])
    counts = {s: len(manifest.split_ids(s)) for s in ("train", "val", "test")}
    print(f"wrote {len(manifest.entries)} samples to {args.out} "
          + " ".join(f"{k}={v}" for k, v in counts.items()))
    print(pipeline.histogram_table(manifest, tau=cfg["tau"]))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args, detector=args.detector, split=args.split)
    if args.method:
        cfg["match.method"] = args.method
    summaries = pipeline.run_pipeline(args.dataset, args.out, cfg["detector"], cfg, cfg["split"],
                                      cfg["jobs"], args.dump_heatmaps)
    for s in summaries:
        print(s.line())
    n_det = sum(s.n_detections for s in summaries)
    n_fail = sum(s.n_failed for s in summaries)
    print(f"{len(summaries)} samples, {n_det} detections, {n_fail} match failures")
    return EXIT_OK


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def cmd_eval(args) -> int:
    cfg = _config(args)
    if not args.run.is_dir():
        raise FileNotFoundError(f"run directory {args.run} does not exist")
    detectors = pipeline.available_detectors(args.run)
    if not detectors:
        raise FileNotFoundError(f"no run outputs under {args.run}")
    dataset = read_dataset(args.dataset)
    rule = cfgmod.build_rule(cfg)
    out_dir = args.out or args.run
    out_dir.mkdir(parents=True, exist_ok=True)

    evals = {d: pipeline.evaluate_run(dataset, args.run / d, rule, cfg["tau"]) for d in detectors}
    report = {d: e.to_dict() for d, e in evals.items()}
    for d, e in evals.items():
        (out_dir / f"{d}.detection.csv").write_text(detection_csv(e.detection), encoding="utf-8")
        (out_dir / f"{d}.depth.csv").write_text(depth_csv(e.depth), encoding="utf-8")
        ov = e.detection.overall
        print(f"[{d}] precision {ov.precision:.4f} recall {ov.recall:.4f} f_score {ov.f_score:.4f} "
              f"depth MAE {_fmt(e.depth.overall_mae)} m over {e.depth.n_valid} points")
        for lo, hi, mae, n in zip(e.depth.bucket_edges, e.depth.bucket_edges[1:],
                                  e.depth.per_bucket_mae, e.depth.per_bucket_count):
            print(f"  [{lo:g},{hi:g}) m: MAE {_fmt(mae)} (n={n})")
    if "oracle" in evals and "blob" in evals:
        attr = pipeline.attribution_from_runs(evals["blob"], evals["oracle"])
        report["attribution"] = attr.to_dict()
        print(f"localization contribution to depth MAE: {_fmt(attr.localization_contribution)} m")
    (out_dir / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n",
                                         encoding="utf-8")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = run_selftest(args.perturb_gradient, args.seed)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


def _stats(samples: list[float]) -> dict:
    a = np.asarray(samples)
    out = {"median_s": float(np.median(a)), "reps": len(samples)}
    if len(samples) > 1:
        q1, q3 = np.percentile(a, [25, 75])
        out["iqr_s"] = float(q3 - q1)
    return out


def _ncc_comparison(rng, n: int = 200) -> dict:
    worst, t_fast, t_naive = 0.0, 0.0, 0.0
    for _ in range(n):
        template = rng.uniform(0, 255, (16, 16))
        strip = rng.uniform(0, 255, (16, 200))
        for method in METHODS:
            t0 = time.perf_counter()
            fast = strip_scores(template, strip, method)
            t1 = time.perf_counter()
            slow = naive_strip_scores(template, strip, method)
            t2 = time.perf_counter()
            t_fast += t1 - t0
            t_naive += t2 - t1
            worst = max(worst, float(np.nanmax(np.abs(fast - slow))))
    return {"fixtures": n, "max_abs_diff": worst, "fast_s": t_fast, "naive_s": t_naive,
            "speedup": t_naive / t_fast if t_fast > 0 else None}


def cmd_bench(args) -> int:
    cfg = _config(args, split=args.split)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    dataset = read_dataset(args.dataset)
    ids = dataset.ids(cfg["split"])[: max(0, args.max_samples)]
    rig = dataset.rig
    mcfg = cfgmod.build_match_config(cfg)
    params = cfgmod.build_detector_params(cfg)
    scene = dataset.manifest.scene or {}
    timings = {k: [] for k in ("render", "detect", "match", "refine")}
    n_points = 0
    for _ in range(args.reps if ids else 0):
        acc = dict.fromkeys(timings, 0.0)
        n_points = 0
        for sid in ids:
            entry = dataset.manifest.entry(sid)
            t0 = time.perf_counter()
            spec = SceneSpec.from_dict({**scene, "seed": entry.seed})
            render_layout(build_layout(spec, rig), rig)
            t1 = time.perf_counter()
            sample = dataset.load(sid)
            t2 = time.perf_counter()
            blob_detect(sample.left_image, params)
            t3 = time.perf_counter()
            lg, rg = grayscale(sample.left_image), grayscale(sample.right_image)
            coarse = []
            for det in oracle_detections(sample.annotations, cfg["tau"]):
                try:
                    coarse.append(coarse_search(lg, rg, det.position, rig, mcfg))
                except RoseStereoError:
                    pass
            t4 = time.perf_counter()
            for c in coarse:
                refine_subpixel(lg, rg, c, mcfg, rig)
            t5 = time.perf_counter()
            n_points += len(coarse)
            acc["render"] += t1 - t0
            acc["detect"] += t3 - t2
            acc["match"] += t4 - t3
            acc["refine"] += t5 - t4
        for k in timings:
            timings[k].append(acc[k])
    report = {
        "split": cfg["split"],
        "n_samples": len(ids),
        "n_points": n_points,
        "stages": {k: (_stats(v) if v else None) for k, v in timings.items()},
        "ncc_fast_vs_naive": _ncc_comparison(np.random.default_rng(0)),
    }
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        args.out.write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "eval": cmd_eval, "selftest": cmd_selftest, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (RoseStereoError, OSError, ValueError, KeyError) as exc:
        print(f"rosestereo: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
