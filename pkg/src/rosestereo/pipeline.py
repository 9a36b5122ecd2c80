"""Dataset generation, detector+matcher runs, and evaluation over run outputs.

Run directory layout, one subdirectory per detector::

    <run>/<detector>/run.json
    <run>/<detector>/samples/000042.detections.jsonl
    <run>/<detector>/samples/000042.matches.jsonl
    <run>/<detector>/samples/000042.heatmap.pfm      (optional)

Every per-sample artifact is its own file, so parallel workers never share
an output stream, and summaries are assembled in sample order.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import config as cfgmod
from .detect import blob_detect
from .errors import FormatError, MissingFileError
from .evaluation import (
    Attribution,
    DepthRecord,
    DetectionReport,
    DepthReport,
    depth_mae,
    depth_records_from_matches,
    detection_metrics,
    ground_truth_points,
    match_detections,
    oracle_detections,
)
from .heatmap import Detection, encode_heatmaps
from .netpbm import write_pfm
from .scenegen.augment import augment as augment_fn
from .scenegen.dataset import (
    Dataset,
    DatasetManifest,
    SampleEntry,
    depth_histogram,
    read_dataset,
    sample_seed,
    split_dataset,
    write_manifest,
    write_sample,
)
from .scenegen.render import build_layout, render_layout
from .stereomatch import MatchFailure, estimate_depths


DETECTORS = ("oracle", "blob")
HIST_EDGES = [float(x) for x in range(7)]


def _parallel_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# -- generation --------------------------------------------------------------

@dataclass(frozen=True)
class _GenTask:
    root: str
    cfg: dict
    master_seed: int
    index: int


def _generate_one(task: _GenTask) -> SampleEntry:
    seed = sample_seed(task.master_seed, task.index)
    rig = cfgmod.build_rig(task.cfg)
    spec = cfgmod.build_scene_spec(task.cfg, seed)
    sample = render_layout(build_layout(spec, rig), rig)
    aug = cfgmod.build_augment(task.cfg, sample_seed(task.master_seed ^ 0xA5A5A5A5, task.index))
    if aug is not None:
        sample = augment_fn(sample, aug)
    files = write_sample(task.root, task.index, sample)
    return SampleEntry(task.index, seed, "train", files, tuple(a.depth_m for a in sample.annotations))


def generate_dataset(root, cfg: dict, master_seed: int, count: int, jobs: int = 1) -> DatasetManifest:
    """Render ``count`` scenes, split them, and write the dataset to ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    tasks = [_GenTask(str(root), cfg, master_seed, i) for i in range(count)]
    entries = _parallel_map(_generate_one, tasks, jobs)
    aug = cfgmod.build_augment(cfg, 0)
    manifest = DatasetManifest(
        entries=tuple(entries),
        rig=cfgmod.build_rig(cfg),
        master_seed=master_seed,
        scene=cfgmod.build_scene_spec(cfg, 0).to_dict(),
        augment=None if aug is None else {k: v for k, v in aug.to_dict().items() if k != "seed"},
    )
    manifest = split_dataset(manifest, tuple(cfg["split.ratios"]), seed=master_seed, stratify_tau=cfg["tau"])
    write_manifest(root, manifest)
    return manifest


def histogram_table(manifest: DatasetManifest, edges=HIST_EDGES, tau: float = 2.0) -> str:
    head = "split  " + " ".join(f"[{a:g},{b:g})".rjust(7) for a, b in zip(edges, edges[1:]))
    lines = [head + "   near distant"]
    for split in ("train", "val", "test"):
        counts = depth_histogram(manifest, split, edges)
        ids = set(manifest.split_ids(split))
        depths = [z for e in manifest.entries if e.id in ids for z in e.depths]
        near = sum(1 for z in depths if z < tau)
        lines.append(f"{split:6} " + " ".join(f"{c:7d}" for c in counts)
                     + f"   {near:4d} {len(depths) - near:7d}")
    return "\n".join(lines)


# -- detector + matcher run ----------------------------------------------------

@dataclass(frozen=True)
class _RunTask:
    dataset_root: str
    out_dir: str
    sample_id: int
    detector: str
    cfg: dict
    dump_heatmaps: bool


@dataclass(frozen=True)
class SampleSummary:
    sample_id: int
    n_detections: int
    n_matched: int
    n_failed: int

    def line(self) -> str:
        return (f"sample {self.sample_id:06d}: {self.n_detections} detections, "
                f"{self.n_matched} matched, {self.n_failed} failed")


def detect_sample(sample, detector: str, cfg: dict) -> list[Detection]:
    if detector == "oracle":
        return oracle_detections(sample.annotations, cfg["tau"])
    if detector == "blob":
        return blob_detect(sample.left_image, cfgmod.build_detector_params(cfg))
    raise ValueError(f"unknown detector {detector!r}")


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


@lru_cache(maxsize=4)
def _open_dataset(root: str) -> Dataset:
    # one manifest parse per worker process rather than per sample
    return read_dataset(root)


def _run_one(task: _RunTask) -> SampleSummary:
    ds = _open_dataset(task.dataset_root)
    sample = ds.load(task.sample_id)
    dets = detect_sample(sample, task.detector, task.cfg)
    results = estimate_depths(sample, dets, ds.rig, cfgmod.build_match_config(task.cfg))
    out = Path(task.out_dir) / "samples"
    stem = f"{task.sample_id:06d}"
    _write_jsonl(out / f"{stem}.detections.jsonl", (d.to_json() for d in dets))
    _write_jsonl(out / f"{stem}.matches.jsonl", (r.to_json() for _, r in results))
    if task.dump_heatmaps:
        w, h = ds.rig.image_size
        stack = encode_heatmaps(sample.annotations, (w, h), task.cfg["tau"])
        write_pfm(out / f"{stem}.heatmap.pfm", stack.as_array())
    n_failed = sum(1 for _, r in results if isinstance(r, MatchFailure))
    return SampleSummary(task.sample_id, len(dets), len(results) - n_failed, n_failed)


def run_pipeline(dataset_root, out_root, detector: str, cfg: dict, split: str = "test",
                 jobs: int = 1, dump_heatmaps: bool = False) -> list[SampleSummary]:
    ds = read_dataset(dataset_root)
    ids = ds.ids(split)
    out_dir = Path(out_root) / detector
    (out_dir / "samples").mkdir(parents=True, exist_ok=True)
    tasks = [_RunTask(str(Path(dataset_root).resolve()), str(out_dir), i, detector, cfg, dump_heatmaps)
             for i in ids]
    summaries = _parallel_map(_run_one, tasks, jobs)
    meta = {
        "detector": detector,
        "split": split,
        "sample_ids": ids,
        "match": {k[6:]: v for k, v in cfg.items() if k.startswith("match.")},
        "rule": {k[5:]: v for k, v in cfg.items() if k.startswith("rule.")},
        "tau": cfg["tau"],
    }
    (out_dir / "run.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summaries


# -- evaluation over run outputs ---------------------------------------------------

def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise MissingFileError(f"missing run output {path}")
    rows, offset = [], 0
    for line in path.read_bytes().splitlines(keepends=True):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except ValueError as exc:
                raise FormatError(path, offset, str(exc)) from None
        offset += len(line)
    return rows


@dataclass(frozen=True)
class _MatchRow:
    depth_m: float | None


def load_run(run_dir: Path) -> tuple[dict, dict[int, tuple[list[Detection], list[_MatchRow]]]]:
    meta_path = run_dir / "run.json"
    if not meta_path.exists():
        raise MissingFileError(f"no run.json in {run_dir}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    out = {}
    for sid in meta["sample_ids"]:
        stem = run_dir / "samples" / f"{sid:06d}"
        dets = [Detection.from_json(r) for r in _read_jsonl(Path(f"{stem}.detections.jsonl"))]
        matches = [_MatchRow(r["depth_m"]) for r in _read_jsonl(Path(f"{stem}.matches.jsonl"))]
        if len(dets) != len(matches):
            raise FormatError(f"{stem}.matches.jsonl", 0, "row count differs from detections")
        out[sid] = (dets, matches)
    return meta, out


@dataclass(frozen=True)
class RunEvaluation:
    detector: str
    detection: DetectionReport
    depth: DepthReport
    n_failed: int
    n_unpaired: int
    n_no_correspondence: int
    records: tuple[DepthRecord, ...]

    def to_dict(self) -> dict:
        return {
            "detector": self.detector,
            "detection": self.detection.to_dict(),
            "depth": self.depth.to_dict(),
            "n_failed_matches": self.n_failed,
            "n_unpaired_estimates": self.n_unpaired,
            "n_no_correspondence": self.n_no_correspondence,
        }


def evaluate_run(dataset: Dataset, run_dir, rule, tau: float = 2.0,
                 bucket_edges=HIST_EDGES) -> RunEvaluation:
    run_dir = Path(run_dir)
    meta, per_sample = load_run(run_dir)
    matches, records = [], []
    n_failed = n_unpaired = n_nocorr = 0
    for sid in sorted(per_sample):
        dets, rows = per_sample[sid]
        gts = ground_truth_points(dataset.annotations(sid), tau)
        matches.append(match_detections(dets, gts, rule))
        pairing = depth_records_from_matches(dets, rows, gts, rule)
        records.extend(pairing.records)
        n_failed += pairing.n_failed
        n_unpaired += pairing.n_unpaired
        n_nocorr += pairing.n_no_correspondence
    return RunEvaluation(meta["detector"], detection_metrics(matches), depth_mae(records, bucket_edges),
                         n_failed, n_unpaired, n_nocorr, tuple(records))


def attribution_from_runs(detector_eval: RunEvaluation, oracle_eval: RunEvaluation) -> Attribution:
    total, oracle = detector_eval.depth.overall_mae, oracle_eval.depth.overall_mae
    contribution = None if total is None or oracle is None else total - oracle
    return Attribution(total, oracle, contribution, detector_eval.depth.n_valid, oracle_eval.depth.n_valid,
                       detector_eval.n_failed, oracle_eval.n_failed)


def available_detectors(run_root) -> list[str]:
    root = Path(run_root)
    return [d for d in DETECTORS if (root / d / "run.json").exists()]
