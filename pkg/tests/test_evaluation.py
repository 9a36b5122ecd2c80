from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rosestereo.errors import DomainError
from rosestereo.evaluation import (
    ClassScores,
    DepthRecord,
    GroundTruthPoint,
    MatchRule,
    attribute_localization_error,
    bbox_from_point,
    depth_csv,
    depth_mae,
    depth_records_from_matches,
    detection_csv,
    detection_metrics,
    ground_truth_points,
    match_detections,
    oracle_detections,
)
from rosestereo.geometry import PixelPoint
from rosestereo.heatmap import Detection
from rosestereo.scenegen import SceneSpec, render_scene, sample_seed
from rosestereo.stereomatch import MatchConfig, MatchFailure, estimate_depths


def det(u, v, cls="near", conf=0.9):
    return Detection(PixelPoint(u, v), cls, conf)


def gt(u, v, cls="near", z=1.0, stereo=True):
    return GroundTruthPoint(PixelPoint(u, v), cls, z, stereo)


def counts(m, cls="near"):
    return len(m[cls].tp_pairs), len(m[cls].fp), len(m[cls].fn)


def test_exact_hit():
    assert counts(match_detections([det(10, 10)], [gt(10, 10)])) == (1, 0, 0)


def test_chebyshev_window():
    assert counts(match_detections([det(15, 15)], [gt(10, 10)])) == (1, 0, 0)
    assert counts(match_detections([det(16, 10)], [gt(10, 10)])) == (0, 1, 1)


def test_duplicate_rule():
    m = match_detections([det(11, 10, conf=0.8), det(10, 10, conf=0.9)], [gt(10, 10)])
    assert counts(m) == (1, 1, 0)
    assert m["near"].tp_pairs == [(1, 0)]


def test_threshold_and_class():
    assert counts(match_detections([det(10, 10, conf=0.5)], [gt(10, 10)])) == (0, 0, 1)
    m = match_detections([det(10, 10, "distant")], [gt(10, 10, "near")])
    assert counts(m, "distant") == (0, 1, 0) and counts(m, "near") == (0, 0, 1)
    m = match_detections([det(10, 10, "distant")], [gt(10, 10, "near")], class_aware=False)
    assert counts(m, "distant") == (1, 0, 0)


points = st.lists(st.tuples(st.floats(0, 60), st.floats(0, 60), st.sampled_from(["near", "distant"]),
                            st.floats(0, 1)), max_size=12)


@settings(max_examples=300)
@given(points, points)
def test_conservation(ps, gs):
    preds = [det(u, v, c, conf) for u, v, c, conf in ps]
    gts = [gt(u, v, c) for u, v, c, _ in gs]
    rule = MatchRule()
    m = match_detections(preds, gts, rule)
    for c in ("near", "distant"):
        tp, fp, fn = counts(m, c)
        assert tp + fn == sum(g.cls == c for g in gts)
        assert tp + fp == sum(p.cls == c and p.confidence >= rule.confidence_threshold for p in preds)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 10), st.integers(0, 10)), max_size=8, unique=True),
       st.lists(st.tuples(st.integers(0, 10), st.integers(0, 10)), max_size=8, unique=True))
def test_symmetry_conflict_free(a, b):
    # points on a 20 px grid: each window holds at most one candidate
    preds = [det(20 * u + 1, 20 * v, conf=1.0) for u, v in a]
    gts = [gt(20 * u, 20 * v) for u, v in b]
    fwd = match_detections(preds, gts)
    rev = match_detections([det(g.u, g.v, conf=1.0) for g in gts], [gt(p.u, p.v) for p in preds])
    assert sorted(fwd["near"].tp_pairs) == sorted((j, i) for i, j in rev["near"].tp_pairs)


def test_class_scores():
    s = ClassScores(9, 1, 0)
    assert (s.precision, s.recall) == (0.9, 1.0)
    assert s.f_score == pytest.approx(2 * 0.9 / 1.9)
    z = ClassScores(0, 0, 0)
    assert (z.precision, z.recall, z.f_score) == (0.0, 0.0, 0.0)
    assert ClassScores(0, 5, 0).precision == 0.0


def test_detection_metrics_over_samples():
    m1 = match_detections([det(10, 10)], [gt(10, 10)])
    m2 = match_detections([det(50, 50)], [gt(10, 10)])
    rep = detection_metrics([m1, m2])
    assert (rep.per_class["near"].tp, rep.per_class["near"].fp, rep.per_class["near"].fn) == (1, 1, 1)
    assert "near,0.500000,0.500000,0.500000,1,1,1" in detection_csv(rep)


def test_depth_mae_examples():
    assert depth_mae([DepthRecord(1.0, 1.0, "near")]).overall_mae == 0.0
    rep = depth_mae([DepthRecord(1.6, 1.5, "near"), DepthRecord(3.3, 3.0, "distant")], [0, 2, 4])
    assert rep.per_bucket_mae == pytest.approx((0.1, 0.3))
    assert rep.overall_mae == pytest.approx(0.2)
    rep = depth_mae([DepthRecord(1.0, 0.0, "near"), DepthRecord(1.0, 1.5, "near")], [0, 2])
    assert rep.n_valid == 1
    assert depth_mae([]).empty and depth_mae([]).overall_mae is None


def test_depth_csv_bucket_table():
    rep = depth_mae([DepthRecord(1.6, 1.5, "near")])
    lines = depth_csv(rep).splitlines()
    assert lines[0] == "subset,category,l1_error,count"
    assert [ln.split(",")[1].strip('"') for ln in lines[-6:]] == [
        "[0", "[1", "[2", "[3", "[4", "[5"]
    assert rep.bucket_edges == tuple(float(x) for x in range(7))


def test_depth_pairing_excludes_hidden_right():
    dets = [det(10, 10), det(40, 40), det(90, 90)]
    results = [type("R", (), {"depth_m": 1.1})(), type("R", (), {"depth_m": 2.2})(),
               MatchFailure(90, 90, "degenerate", "", "nccoef")]
    gts = [gt(10, 10, z=1.0), gt(40, 40, z=2.0, stereo=False)]
    pairing = depth_records_from_matches(dets, results, gts)
    assert pairing.records == [DepthRecord(1.1, 1.0, "near")]
    assert (pairing.n_failed, pairing.n_unpaired, pairing.n_no_correspondence) == (1, 0, 1)


def test_bbox_from_point():
    assert bbox_from_point(PixelPoint(1, 2), 1.0)[1] == 60.0
    assert bbox_from_point(PixelPoint(1, 2), 2.0)[1] == 30.0
    with pytest.raises(DomainError):
        bbox_from_point(PixelPoint(1, 2), 0.0)


@pytest.fixture(scope="module")
def scene():
    from rosestereo.geometry import dataset_rig
    return render_scene(SceneSpec(seed=sample_seed(42, 3)), dataset_rig())


def test_oracle_detections_score_perfectly(scene):
    gts = ground_truth_points(scene.annotations)
    rep = detection_metrics(match_detections(oracle_detections(scene.annotations), gts))
    assert rep.overall.f_score == 1.0


def test_attribution(scene, rig):
    cfg = MatchConfig()
    oracle = oracle_detections(scene.annotations)
    same = attribute_localization_error(scene, oracle, oracle, rig, cfg)
    assert same.localization_contribution == 0.0
    shifted = [Detection(PixelPoint(d.u + 3, d.v), d.cls, d.confidence) for d in oracle]
    moved = attribute_localization_error(scene, shifted, oracle, rig, cfg)
    assert moved.localization_contribution > 0
    assert not attribute_localization_error(scene, [], oracle, rig, cfg).defined


def test_depth_from_oracle_points(scene, rig):
    oracle = oracle_detections(scene.annotations)
    out = estimate_depths(scene, oracle, rig)
    pairing = depth_records_from_matches(oracle, [r for _, r in out], ground_truth_points(scene.annotations))
    assert len(pairing.records) + pairing.n_failed + pairing.n_no_correspondence == len(oracle)
    assert np.median([abs(r.pred_m - r.gt_m) / r.gt_m for r in pairing.records]) < 0.05
