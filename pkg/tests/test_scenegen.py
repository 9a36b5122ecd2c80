from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest

from rosestereo.errors import FormatError, MissingFileError, SplitError, UnknownSplitError
from rosestereo.geometry import Point3, disparity_of_depth
from rosestereo.scenegen import (
    AugmentSpec,
    DatasetManifest,
    SampleEntry,
    SceneSpec,
    augment,
    build_layout,
    depth_histogram,
    read_dataset,
    render_layout,
    render_scene,
    sample_seed,
    single_flower_layout,
    split_counts,
    split_dataset,
    write_dataset,
)
from rosestereo.scenegen.dataset import read_annotations, write_annotations
from rosestereo.scenegen.render import pixel_index, rasterize
from rosestereo.stereomatch import grayscale, nccoef_score


@pytest.fixture(scope="module")
def scenes():
    from rosestereo.geometry import dataset_rig
    rig = dataset_rig()
    return [render_scene(SceneSpec(seed=sample_seed(7, i)), rig) for i in range(4)]


def test_single_flower_annotation(example_rig):
    sample = render_layout(single_flower_layout(Point3(0, 0, 2)), example_rig)
    (a,) = sample.annotations
    assert a.left_px == pytest.approx((320, 240))
    assert a.right_px == pytest.approx((287.5, 240))
    assert a.depth_m == 2.0
    assert a.visible_left and a.visible_right
    assert abs(sample.left_depth[240, 320] - 2.0) <= 1e-3


def test_render_deterministic(rig):
    spec = SceneSpec(seed=123)
    a, b = render_scene(spec, rig), render_scene(spec, rig)
    assert a.left_image.tobytes() == b.left_image.tobytes()
    assert a.right_image.tobytes() == b.right_image.tobytes()
    assert a.left_depth.tobytes() == b.left_depth.tobytes()


def test_ground_truth_consistency(scenes):
    for s in scenes:
        for a in s.annotations:
            assert a.left_px.u - a.right_px.u == pytest.approx(disparity_of_depth(s.rig, a.depth_m), abs=1e-6)
            assert a.left_px.v == a.right_px.v


def test_zbuffer_at_centers(scenes):
    checked = 0
    for s in scenes:
        for a in s.annotations:
            z = s.left_depth[pixel_index(a.left_px.v), pixel_index(a.left_px.u)]
            if a.visible_left:
                assert abs(z - a.depth_m) <= 1e-3
                checked += 1
            else:
                # hidden centers are covered by something nearer
                assert z < a.depth_m
    assert checked > 10


def test_center_separation(rig):
    for seed in range(10):
        spec = SceneSpec(seed=seed)
        anns = build_layout(spec, rig).annotations
        for a, b in itertools.combinations(anns, 2):
            assert math.dist(a.left_px, b.left_px) >= spec.min_center_separation_px


def test_owner_buffer_matches_visibility(rig):
    layout = build_layout(SceneSpec(seed=5), rig)
    _, _, owner = rasterize(layout, rig, "left")
    flower_disc = {d.flower_id: k for k, d in enumerate(layout.discs) if d.kind == "flower"}
    for a in layout.annotations:
        at_center = owner[pixel_index(a.left_px.v), pixel_index(a.left_px.u)]
        assert (at_center == flower_disc[a.id]) == a.visible_left


def test_plain_background_has_zero_depth(rig):
    s = render_layout(single_flower_layout(Point3(0, 0, 2), background="plain"), rig)
    assert s.left_depth[0, 0] == 0.0
    assert np.count_nonzero(s.left_depth) > 0


def test_augment_identity(scenes):
    s = scenes[0]
    out = augment(s, AugmentSpec())
    np.testing.assert_array_equal(out.left_image, s.left_image)
    np.testing.assert_array_equal(out.right_image, s.right_image)


def test_augment_brightness_same_both_eyes(scenes):
    s = scenes[1]
    out = augment(s, AugmentSpec(brightness_delta=(20, 20)))
    for old, new in ((s.left_image, out.left_image), (s.right_image, out.right_image)):
        unclamped = (old.astype(int) + 20) <= 255
        diff = new.astype(int) - old.astype(int)
        assert np.all(diff[unclamped] == 20)


def test_augment_deterministic(scenes):
    spec = AugmentSpec(brightness_delta=(-10, 10), contrast_gain=(0.8, 1.2), noise_sigma=2.0,
                       sunflare=True, rain=True, seed=9)
    a, b = augment(scenes[2], spec), augment(scenes[2], spec)
    assert a.left_image.tobytes() == b.left_image.tobytes()


def test_augment_keeps_nccoef(scenes):
    s = scenes[0]
    a = next(x for x in s.annotations if x.visible_left and x.visible_right
             and 40 < x.left_px.u < 600 and 40 < x.left_px.v < 440)
    out = augment(s, AugmentSpec(brightness_delta=(15, 15)))

    def score(sample):
        lg, rg = grayscale(sample.left_image), grayscale(sample.right_image)
        u, v, ur = pixel_index(a.left_px.u), pixel_index(a.left_px.v), pixel_index(a.right_px.u)
        return nccoef_score(lg[v - 8:v + 8, u - 8:u + 8], rg[v - 8:v + 8, ur - 8:ur + 8])

    assert abs(score(out) - score(s)) < 1e-3


def test_split_counts():
    assert split_counts(1000, (0.7, 0.15, 0.15)) == (700, 150, 150)
    assert split_counts(10, (0.7, 0.15, 0.15)) == (8, 1, 1)
    with pytest.raises(SplitError):
        split_counts(10, (0.5, 0.5, 0.5))


def _manifest(rig, depths_per_sample):
    entries = tuple(SampleEntry(i, i, "train", {}, tuple(d)) for i, d in enumerate(depths_per_sample))
    return DatasetManifest(entries, rig)


def test_split_dataset(rig):
    m = split_dataset(_manifest(rig, [()] * 10), seed=3)
    assert [len(m.split_ids(s)) for s in ("train", "val", "test")] == [8, 1, 1]
    assert split_dataset(_manifest(rig, [()] * 10), seed=3) == m
    with pytest.raises(SplitError):
        split_dataset(_manifest(rig, [()] * 2))
    with pytest.raises(UnknownSplitError):
        m.split_ids("holdout")


def test_depth_histogram(rig):
    m = split_dataset(_manifest(rig, [(2.5,), (), ()]), seed=0)
    sid = m.entries[0].split
    assert depth_histogram(m, sid, [0, 2, 4]) == [0, 1]
    empty = next(s for s in ("train", "val", "test") if s != sid)
    assert depth_histogram(m, empty, [0, 2, 4]) == [0, 0]
    # half-open: a value on an edge goes to the upper bucket
    m2 = split_dataset(_manifest(rig, [(2.0, 4.0), (), ()]), seed=0)
    assert depth_histogram(m2, m2.entries[0].split, [0, 2, 4]) == [0, 1]


def test_annotation_roundtrip(tmp_path, scenes):
    anns = scenes[0].annotations
    write_annotations(tmp_path / "a.jsonl", anns)
    assert read_annotations(tmp_path / "a.jsonl") == anns


def test_bad_annotation_line(tmp_path, scenes):
    path = tmp_path / "a.jsonl"
    write_annotations(path, scenes[0].annotations[:1])
    first = path.read_bytes()
    path.write_bytes(first + b'{"id": 1}\n')
    with pytest.raises(FormatError) as exc:
        read_annotations(path)
    assert exc.value.offset == len(first)


def test_dataset_roundtrip_and_missing_file(tmp_path, scenes, rig):
    m = split_dataset(_manifest(rig, [()] * 4), seed=1)
    m = write_dataset(m, scenes, tmp_path)
    ds = read_dataset(tmp_path)
    loaded = ds.load(2)
    np.testing.assert_array_equal(loaded.left_image, scenes[2].left_image)
    np.testing.assert_array_equal(loaded.right_depth, scenes[2].right_depth)
    assert loaded.annotations == scenes[2].annotations
    assert json.loads((tmp_path / "manifest.json").read_text())["samples"][2]["depths"] == [
        a.depth_m for a in scenes[2].annotations]

    victim = tmp_path / m.entries[1].files["right_depth"]
    victim.unlink()
    with pytest.raises(MissingFileError) as exc:
        read_dataset(tmp_path)
    assert str(victim) in str(exc.value)


def test_sample_seed_independent_of_order():
    assert sample_seed(42, 5) == sample_seed(42, 5)
    assert len({sample_seed(42, i) for i in range(100)}) == 100


def test_stratified_split_balances_near_share(rig):
    rng = np.random.default_rng(0)
    depths = [tuple(rng.choice([1.0, 3.0], p=[q, 1 - q], size=10)) for q in rng.random(200)]
    m = split_dataset(_manifest(rig, depths), seed=4)
    assert [len(m.split_ids(s)) for s in ("train", "val", "test")] == [140, 30, 30]

    def share(split):
        ids = set(m.split_ids(split))
        zs = [z for e in m.entries if e.id in ids for z in e.depths]
        return sum(z < 2 for z in zs) / len(zs)

    overall = sum(z < 2 for d in depths for z in d) / 2000
    for s in ("train", "val", "test"):
        assert abs(share(s) - overall) < 0.02


def test_contiguous_split(rig):
    m = split_dataset(_manifest(rig, [()] * 20), seed=2, stratify_tau=None)
    perm = np.random.default_rng(2).permutation(20)
    assert [m.entries[k].split for k in perm] == ["train"] * 14 + ["val"] * 3 + ["test"] * 3
