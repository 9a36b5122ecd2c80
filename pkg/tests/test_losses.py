from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rosestereo.errors import DomainError, UndefinedLossError
from rosestereo.heatmap import scale_depth, unscale_depth
from rosestereo.losses import (
    ClassWeights,
    cce_loss,
    custom_sigmoid,
    custom_sigmoid_grad,
    depth_loss,
    finite_diff_check,
    inverse_custom_sigmoid,
    inverse_custom_sigmoid_grad,
    smoothed_l1,
    total_loss_mono,
    total_loss_stereo,
)


def test_custom_sigmoid_values():
    assert custom_sigmoid(5) == 0.5
    assert custom_sigmoid(7) == pytest.approx(0.7310585786, abs=1e-10)
    assert custom_sigmoid(-1000) <= 1e-12
    assert custom_sigmoid(1000) == 1.0


def test_inverse_values():
    assert inverse_custom_sigmoid(0.5) == 5.0
    assert inverse_custom_sigmoid(0.7310585786) == pytest.approx(7.0, abs=1e-8)
    for bad in (0.0, 1.0, 1.5, -0.1):
        with pytest.raises(DomainError):
            inverse_custom_sigmoid(bad)


def test_sigmoid_inverse_identity():
    x = np.linspace(-5, 15, 4001)
    assert np.max(np.abs(inverse_custom_sigmoid(custom_sigmoid(x)) - x)) <= 1e-9


def test_cce_values():
    assert cce_loss([0, 1, 0], "near")[0] == 0.0
    w1 = ClassWeights(w_near=1.0)
    assert cce_loss([0.25, 0.5, 0.25], "near", w1)[0] == pytest.approx(0.6931471806, abs=1e-9)
    assert cce_loss([0.25, 0.5, 0.25], "near")[0] == pytest.approx(3.4657359028, abs=1e-9)
    assert cce_loss([0.25, 0.5, 0.25], 1, w1)[1].tolist() == [0.0, -2.0, 0.0]


@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3), st.integers(0, 2))
def test_cce_nonnegative(p, t):
    loss, _ = cce_loss(p, t)
    assert loss >= 0
    assert (loss == 0) == (p[t] == 1.0)


def test_smoothed_l1_values():
    assert smoothed_l1(0.0) == (0.0, 0.0)
    assert smoothed_l1(1.0) == (0.5, 1.0)
    assert smoothed_l1(-3.0) == (2.5, -1.0)
    # both branches agree at the boundary
    assert 0.5 * 1.0 * 1.0 == abs(1.0) - 0.5


def test_depth_loss():
    assert depth_loss([1.0, 2.0], [1.0, 2.0], [True, True])[0] == 0.0
    loss, grad = depth_loss([0.5, 2.0], [0.0, 0.0], [True, True])
    assert loss == pytest.approx(0.8125)
    assert grad.tolist() == [0.25, 0.5]
    loss, grad = depth_loss([0.5, 2.0], [0.0, 0.0], [True, False])
    assert loss == pytest.approx(0.125) and grad[1] == 0.0
    with pytest.raises(UndefinedLossError):
        depth_loss([1.0], [0.0], [False])


def test_total_losses():
    assert total_loss_mono(0, 0) == 0
    assert total_loss_mono(0.7, 0.3) == pytest.approx(1.0)
    assert total_loss_stereo(0, 0, 0) == 0
    assert total_loss_stereo(0.2, 0.3, 0.5) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b, c = rng.random(3)
        assert total_loss_stereo(a, b, c) == total_loss_mono(a + b, c)


def test_total_composition():
    rng = np.random.default_rng(1)
    p = rng.dirichlet([1, 1, 1])
    pred, gt = rng.random(5), rng.random(5)
    cce = cce_loss(p, "distant")[0]
    dl = depth_loss(pred, gt, np.ones(5, bool))[0]
    assert total_loss_mono(cce, dl) == cce + dl


def test_finite_diff_examples():
    assert finite_diff_check(lambda x: smoothed_l1(x)[0], lambda x: smoothed_l1(x)[1], 0.3) < 1e-6
    assert custom_sigmoid_grad(5.0) == 0.125
    assert finite_diff_check(custom_sigmoid, custom_sigmoid_grad, 5.0) < 1e-6

    def f(t):
        return cce_loss([0.25, t, 0.75 - t], "near", ClassWeights(w_near=1.0))[0]

    def g(t):
        return cce_loss([0.25, t, 0.75 - t], "near", ClassWeights(w_near=1.0))[1][1]

    assert g(0.5) == -2.0
    assert finite_diff_check(f, g, 0.5) < 1e-6


@given(st.floats(-5, 15))
def test_sigmoid_grad(x):
    assert finite_diff_check(custom_sigmoid, custom_sigmoid_grad, x) <= 1e-5


@given(st.floats(0.02, 0.98))
def test_inverse_grad(y):
    assert finite_diff_check(inverse_custom_sigmoid, inverse_custom_sigmoid_grad, y) <= 1e-5


@given(st.floats(-4, 4))
def test_smoothed_l1_grad(x):
    assume(abs(abs(x) - 1.0) > 1e-3)
    assert finite_diff_check(lambda t: smoothed_l1(t)[0], lambda t: smoothed_l1(t)[1], x) <= 1e-5


@given(st.floats(1e-3, 1.0))
def test_scaling_chain(frac):
    d = 8.0 * frac * (1 - 1e-6)
    back = unscale_depth(inverse_custom_sigmoid(custom_sigmoid(scale_depth(d))))
    assert math.isclose(back, d, rel_tol=1e-9, abs_tol=1e-12)
