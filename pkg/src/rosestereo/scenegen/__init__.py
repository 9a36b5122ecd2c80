"""Synthetic stereo scenes with exact ground truth."""

from .augment import AugmentSpec, augment
from .dataset import (
    Dataset,
    DatasetManifest,
    SampleEntry,
    depth_histogram,
    read_dataset,
    sample_seed,
    split_counts,
    split_dataset,
    write_dataset,
)
from .render import (
    Disc,
    FlowerAnnotation,
    Sample,
    SceneLayout,
    SceneSpec,
    build_layout,
    render_layout,
    render_scene,
    single_flower_layout,
)

__all__ = [
    "AugmentSpec",
    "Dataset",
    "DatasetManifest",
    "Disc",
    "FlowerAnnotation",
    "Sample",
    "SampleEntry",
    "SceneLayout",
    "SceneSpec",
    "augment",
    "build_layout",
    "depth_histogram",
    "read_dataset",
    "render_layout",
    "render_scene",
    "sample_seed",
    "single_flower_layout",
    "split_counts",
    "split_dataset",
    "write_dataset",
]
