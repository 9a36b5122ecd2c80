"""Dataset manifests, splitting, and on-disk layout.

Layout of a dataset directory::

    manifest.json
    samples/000042/left.ppm  right.ppm  left_depth.pfm  right_depth.pfm  annotations.jsonl
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ..errors import FormatError, MissingFileError, SplitError, UnknownSplitError
from ..geometry import StereoRig
from ..netpbm import read_pfm, read_ppm, write_pfm, write_ppm
from .render import FlowerAnnotation, Sample

MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.7, 0.15, 0.15)
SAMPLE_FILES = {
    "left_image": "left.ppm",
    "right_image": "right.ppm",
    "left_depth": "left_depth.pfm",
    "right_depth": "right_depth.pfm",
    "annotations": "annotations.jsonl",
}


def sample_seed(master_seed: int, index: int) -> int:
    """Per-sample 64-bit seed, independent of generation order."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SampleEntry:
    id: int
    seed: int
    split: str = "train"
    files: dict = field(default_factory=dict)
    depths: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"id": self.id, "seed": self.seed, "split": self.split,
                "files": dict(self.files), "depths": list(self.depths)}

    @classmethod
    def from_dict(cls, d: dict) -> "SampleEntry":
        return cls(int(d["id"]), int(d["seed"]), str(d["split"]), dict(d.get("files", {})),
                   tuple(float(x) for x in d.get("depths", ())))


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[SampleEntry, ...]
    rig: StereoRig
    master_seed: int = 0
    split_ratios: tuple[float, float, float] = DEFAULT_RATIOS
    split_seed: int = 0
    scene: dict = field(default_factory=dict)
    augment: dict | None = None

    def split_ids(self, split: str) -> list[int]:
        if split not in SPLITS:
            raise UnknownSplitError(split)
        return [e.id for e in self.entries if e.split == split]

    def entry(self, sample_id: int) -> SampleEntry:
        for e in self.entries:
            if e.id == sample_id:
                return e
        raise KeyError(sample_id)

    def to_dict(self) -> dict:
        return {
            "format": "rosestereo-dataset/1",
            "master_seed": self.master_seed,
            "split_ratios": list(self.split_ratios),
            "split_seed": self.split_seed,
            "rig": self.rig.to_dict(),
            "scene": self.scene,
            "augment": self.augment,
            "samples": [e.to_dict() for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            entries=tuple(SampleEntry.from_dict(e) for e in d["samples"]),
            rig=StereoRig.from_dict(d["rig"]),
            master_seed=int(d.get("master_seed", 0)),
            split_ratios=tuple(float(x) for x in d.get("split_ratios", DEFAULT_RATIOS)),
            split_seed=int(d.get("split_seed", 0)),
            scene=dict(d.get("scene", {})),
            augment=d.get("augment"),
        )


def split_counts(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Floor val/test sizes; the remainder goes to train."""
    _check_ratios(ratios)
    n_val = math.floor(n * ratios[1] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    return n - n_val - n_test, n_val, n_test


def _check_ratios(ratios):
    if len(ratios) != 3 or any(not r > 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"split ratios must be three positive numbers summing to 1, got {ratios}")


def _near_share(entry: SampleEntry, tau: float) -> float:
    if not entry.depths:
        return 0.0
    return sum(1 for z in entry.depths if z < tau) / len(entry.depths)


def split_dataset(manifest: DatasetManifest, ratios=DEFAULT_RATIOS, seed: int = 0,
                  stratify_tau: float | None = 2.0) -> DatasetManifest:
    """Tag every entry train/val/test with floor-rule sizes.

    Entries are shuffled by ``seed``. With ``stratify_tau`` set, the shuffled
    entries are ordered by their share of flowers nearer than ``stratify_tau``
    (a stable sort, so the shuffle breaks ties) and dealt to the split that is
    furthest below its target size; each split then sees the whole range of
    near shares and the near:distant ratio stays close to the global one.
    With ``stratify_tau=None`` the shuffled order is cut into contiguous blocks.
    """
    n = len(manifest.entries)
    _check_ratios(ratios)
    if n < 3:
        raise SplitError(f"need at least 3 samples to split, have {n}")
    sizes = split_counts(n, ratios)
    perm = np.random.default_rng(seed).permutation(n)
    tags = [""] * n
    if stratify_tau is None:
        for rank, k in enumerate(perm):
            tags[k] = "train" if rank < sizes[0] else ("val" if rank < sizes[0] + sizes[1] else "test")
    else:
        order = sorted(perm, key=lambda k: _near_share(manifest.entries[k], stratify_tau))
        filled = [0, 0, 0]
        for k in order:
            # smallest filled fraction wins; ties go to the earlier split
            s = min((i for i in range(3) if filled[i] < sizes[i]), key=lambda i: filled[i] / sizes[i])
            filled[s] += 1
            tags[k] = SPLITS[s]
    entries = tuple(replace(e, split=t) for e, t in zip(manifest.entries, tags))
    return replace(manifest, entries=entries, split_ratios=tuple(ratios), split_seed=seed)


def depth_histogram(manifest: DatasetManifest, split: str, bucket_edges: Sequence[float]) -> list[int]:
    """Annotation counts per half-open depth bucket ``[e_i, e_{i+1})``."""
    edges = [float(e) for e in bucket_edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bucket edges must be strictly increasing")
    ids = set(manifest.split_ids(split))
    depths = [z for e in manifest.entries if e.id in ids for z in e.depths]
    bucket = np.searchsorted(edges, depths, side="right") - 1
    n = len(edges) - 1
    return np.bincount(bucket[(bucket >= 0) & (bucket < n)], minlength=n).tolist()


def write_annotations(path, annotations: Sequence[FlowerAnnotation]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for a in annotations:
            f.write(json.dumps(a.to_json()) + "\n")


def read_annotations(path) -> list[FlowerAnnotation]:
    raw = Path(path).read_bytes()
    out = []
    offset = 0
    for line in raw.splitlines(keepends=True):
        text = line.strip()
        if text:
            try:
                out.append(FlowerAnnotation.from_json(json.loads(text)))
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(path, offset, f"bad annotation record: {exc}") from None
        offset += len(line)
    return out


def sample_dir_name(sample_id: int) -> str:
    return f"samples/{sample_id:06d}"


def write_sample(root, sample_id: int, sample: Sample) -> dict:
    """Write one sample's files; returns the manifest ``files`` mapping."""
    root = Path(root)
    rel = sample_dir_name(sample_id)
    (root / rel).mkdir(parents=True, exist_ok=True)
    files = {key: f"{rel}/{name}" for key, name in SAMPLE_FILES.items()}
    write_ppm(root / files["left_image"], sample.left_image)
    write_ppm(root / files["right_image"], sample.right_image)
    write_pfm(root / files["left_depth"], sample.left_depth)
    write_pfm(root / files["right_depth"], sample.right_depth)
    write_annotations(root / files["annotations"], sample.annotations)
    return files


def write_manifest(root, manifest: DatasetManifest) -> None:
    path = Path(root) / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), indent=1) + "\n", encoding="utf-8")


def write_dataset(manifest: DatasetManifest, samples: Sequence[Sample], root) -> DatasetManifest:
    """Write samples (in manifest entry order) plus the manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if len(samples) != len(manifest.entries):
        raise ValueError("one sample per manifest entry required")
    entries = []
    for entry, sample in zip(manifest.entries, samples):
        files = write_sample(root, entry.id, sample)
        entries.append(replace(entry, files=files,
                               depths=tuple(a.depth_m for a in sample.annotations)))
    manifest = replace(manifest, entries=tuple(entries))
    write_manifest(root, manifest)
    return manifest


class Dataset:
    """A manifest plus lazy access to the sample files it references."""

    def __init__(self, root, manifest: DatasetManifest):
        self.root = Path(root)
        self.manifest = manifest

    @property
    def rig(self) -> StereoRig:
        return self.manifest.rig

    def __len__(self) -> int:
        return len(self.manifest.entries)

    def ids(self, split: str | None = None) -> list[int]:
        if split is None or split == "all":
            return [e.id for e in self.manifest.entries]
        return self.manifest.split_ids(split)

    def annotations(self, sample_id: int) -> list[FlowerAnnotation]:
        e = self.manifest.entry(sample_id)
        return read_annotations(self.root / e.files["annotations"])

    def load(self, sample_id: int) -> Sample:
        e = self.manifest.entry(sample_id)
        p = {k: self.root / v for k, v in e.files.items()}
        return Sample(
            left_image=read_ppm(p["left_image"]),
            right_image=read_ppm(p["right_image"]),
            left_depth=read_pfm(p["left_depth"]),
            right_depth=read_pfm(p["right_depth"]),
            annotations=read_annotations(p["annotations"]),
            rig=self.manifest.rig,
            scene_seed=e.seed,
        )

    def __iter__(self) -> Iterator[Sample]:
        for e in self.manifest.entries:
            yield self.load(e.id)


def read_dataset(root) -> Dataset:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.exists():
        raise MissingFileError(f"no dataset manifest at {path}")
    raw = path.read_bytes()
    try:
        manifest = DatasetManifest.from_dict(json.loads(raw))
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.pos, exc.msg) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(path, 0, f"invalid manifest: {exc}") from None
    missing = [str(root / rel) for e in manifest.entries for rel in e.files.values()
               if not (root / rel).exists()]
    if missing:
        raise MissingFileError("dataset files missing: " + ", ".join(missing))
    return Dataset(root, manifest)
