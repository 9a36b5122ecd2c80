from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rosestereo.errors import DomainError
from rosestereo.geometry import PixelPoint, Point3
from rosestereo.heatmap import (
    Detection,
    HeatmapStack,
    SigmaLaw,
    classify_by_depth,
    decode_heatmaps,
    encode_heatmaps,
    scale_depth,
    unscale_depth,
)
from rosestereo.scenegen.render import FlowerAnnotation

SIZE = (200, 150)


def ann(u, v, z, k=0, visible=True):
    p = PixelPoint(u, v)
    return FlowerAnnotation(k, Point3(0, 0, z), p, p, z, 10.0, visible, visible)


def gaussian_stack(peaks, sigma, shape=(150, 200)):
    rows, cols = np.indices(shape)
    near = np.zeros(shape)
    for u, v in peaks:
        near = np.maximum(near, np.exp(-((cols - u) ** 2 + (rows - v) ** 2) / (2 * sigma ** 2)))
    return HeatmapStack(near, np.zeros(shape), 1 - near)


@pytest.mark.parametrize("z, cls", [(1.0, "near"), (2.0, "distant"), (5.0, "distant")])
def test_classify_by_depth(z, cls):
    assert classify_by_depth(z, 2.0) == cls


def test_sigma_law():
    law = SigmaLaw()
    assert law.sigma(1.0) == pytest.approx(2 * law.sigma(2.0))
    assert law.sigma(100.0) == law.sigma_min
    assert law.sigma(0.1) == law.sigma_max
    z = np.linspace(0.6, 5.0, 50)
    s = [law.sigma(x) for x in z]
    assert all(a > b for a, b in zip(s, s[1:]))


def test_encode_empty():
    stack = encode_heatmaps([], SIZE)
    assert not stack.near.any() and not stack.distant.any()
    assert np.all(stack.background == 1.0)


def test_encode_single_near():
    stack = encode_heatmaps([ann(100, 100, 1.0)], SIZE)
    assert stack.near[100, 100] == 1.0
    assert not stack.distant.any()
    # the 1/e^(1/2) point sits one sigma (8 px at 1 m) from the center
    assert stack.near[100, 108] == pytest.approx(math.exp(-0.5))


def test_flower_at_tau_is_distant():
    stack = encode_heatmaps([ann(50, 50, 2.0)], SIZE)
    assert not stack.near.any() and stack.distant[50, 50] == 1.0


def test_invisible_flower_skipped():
    assert not encode_heatmaps([ann(50, 50, 1.0, visible=False)], SIZE).near.any()


def test_decode_single_peak():
    (d,) = decode_heatmaps(gaussian_stack([(80.3, 60.6)], 3.0), 0.51)
    assert math.dist((d.u, d.v), (80.3, 60.6)) <= 0.5
    assert d.cls == "near"
    assert d.confidence == pytest.approx(1.0, abs=0.05)

    (d,) = decode_heatmaps(gaussian_stack([(80, 60)], 3.0), 0.51)
    assert d.confidence == 1.0


def test_decode_component_cut_by_border():
    # sigma 10.7 at 0.75 m; a plain centroid lands about 2 px inside
    stack = encode_heatmaps([ann(634.05, 399.45, 0.75)], (640, 480))
    (d,) = decode_heatmaps(stack, 0.51)
    assert math.dist((d.u, d.v), (634.05, 399.45)) <= 0.5


def test_decode_below_threshold():
    stack = gaussian_stack([(80, 60)], 3.0)
    low = HeatmapStack(stack.near * 0.5, stack.distant, 1 - stack.near * 0.5)
    assert decode_heatmaps(low, 0.51) == []


def test_decode_two_peaks():
    dets = decode_heatmaps(gaussian_stack([(80, 60), (100, 60)], 2.0), 0.51)
    assert len(dets) == 2


def test_decode_threshold_domain():
    with pytest.raises(DomainError):
        decode_heatmaps(gaussian_stack([(80, 60)], 3.0), 1.0)


def test_scale_depth():
    assert scale_depth(4.0) == 0.5
    assert scale_depth(0) == 0
    x = np.linspace(0.1, 50, 30)
    np.testing.assert_allclose(unscale_depth(scale_depth(x)), x, rtol=1e-15)


def test_detection_json_roundtrip():
    d = Detection(PixelPoint(1.5, 2.25), "distant", 0.75)
    assert Detection.from_json(d.to_json()) == d
    with pytest.raises(DomainError):
        Detection(PixelPoint(0, 0), "near", 1.5)


annotation_sets = st.lists(
    st.tuples(st.floats(10, 630), st.floats(10, 470), st.floats(0.4, 6.0)), min_size=0, max_size=6)


@settings(max_examples=60, deadline=None)
@given(annotation_sets)
def test_peak_and_channel_coherence(points):
    anns = [ann(u, v, z, k) for k, (u, v, z) in enumerate(points)]
    stack = encode_heatmaps(anns, (640, 480))
    assert np.array_equal(stack.background + np.maximum(stack.near, stack.distant),
                          np.ones_like(stack.background))
    for a in anns:
        chan = stack.channel(classify_by_depth(a.depth_m))
        assert chan[round(a.left_px.v), round(a.left_px.u)] >= 0.999


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_roundtrip_separated(seed):
    rng = np.random.default_rng(seed)
    law = SigmaLaw()
    sep = 6 * law.sigma_max
    pts = []
    for _ in range(200):
        u, v = rng.uniform(0, 639.49), rng.uniform(0, 479.49)
        if all(math.dist((u, v), p[:2]) >= sep for p in pts):
            pts.append((u, v, rng.uniform(0.3, 7.0)))
        if len(pts) == 5:
            break
    anns = [ann(u, v, z, k) for k, (u, v, z) in enumerate(pts)]
    dets = decode_heatmaps(encode_heatmaps(anns, (640, 480)), 0.51)
    assert len(dets) == len(anns)
    for a in anns:
        best = min(dets, key=lambda d: math.dist((d.u, d.v), a.left_px))
        assert math.dist((best.u, best.v), a.left_px) <= 1.0
        assert best.cls == classify_by_depth(a.depth_m)
