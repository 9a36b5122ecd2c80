"""Training-time loss kernels with analytic gradients.

Depth-head convention: raw network output -> :func:`custom_sigmoid` gives a
prediction in scaled-depth units, compared against ``scale_depth(gt)``.
Metric depth is recovered with ``unscale_depth(inverse_custom_sigmoid(y))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, UndefinedLossError

CLASS_ORDER = ("background", "near", "distant")


@dataclass(frozen=True)
class ClassWeights:
    w_background: float = 1.0
    w_near: float = 5.0
    w_distant: float = 3.0

    def __post_init__(self):
        if not (self.w_background > 0 and self.w_near > 0 and self.w_distant > 0):
            raise DomainError("class weights must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_background, self.w_near, self.w_distant])


def _logistic(z):
    # split by sign so neither branch overflows exp
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def custom_sigmoid(x):
    """``sigma((x - 5) / 2)`` with the standard logistic ``sigma``."""
    y = _logistic((np.asarray(x, dtype=np.float64) - 5.0) / 2.0)
    return float(y) if y.ndim == 0 else y


def custom_sigmoid_grad(x):
    s = custom_sigmoid(x)
    return s * (1.0 - s) / 2.0


def inverse_custom_sigmoid(y):
    """``-2 ln(1/y - 1) + 5``; defined on the open interval (0, 1)."""
    arr = np.asarray(y, dtype=np.float64)
    if np.any(~((arr > 0) & (arr < 1))):
        raise DomainError("inverse_custom_sigmoid needs 0 < y < 1")
    # log(y) - log1p(-y) == -ln(1/y - 1), without cancellation near 1
    out = 2.0 * (np.log(arr) - np.log1p(-arr)) + 5.0
    return float(out) if out.ndim == 0 else out


def inverse_custom_sigmoid_grad(y):
    arr = np.asarray(y, dtype=np.float64)
    return 2.0 / (arr * (1.0 - arr))


def _class_index(target) -> int:
    if isinstance(target, str):
        try:
            return CLASS_ORDER.index(target)
        except ValueError:
            raise DomainError(f"unknown class {target!r}") from None
    return int(target)


def cce_loss(probs: Sequence[float], target, weights: ClassWeights = ClassWeights()):
    """Weighted cross-entropy of one pixel.

    ``probs`` are (background, near, distant) probabilities; ``target`` is a
    class name or index. Returns ``(loss, grad)`` where ``grad`` is the
    derivative with respect to each probability.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (3,):
        raise DomainError("expected three class probabilities")
    t = _class_index(target)
    if not p[t] > 0:
        raise DomainError(f"target probability must be positive, got {p[t]}")
    w = weights.as_array()[t]
    loss = -w * math.log(p[t])
    grad = np.zeros(3)
    grad[t] = -w / p[t]
    return loss, grad


def smoothed_l1(x):
    """Smoothed L1 and its derivative: quadratic inside ``|x| < 1``, linear outside."""
    arr = np.asarray(x, dtype=np.float64)
    ax = np.abs(arr)
    inner = ax < 1.0
    loss = np.where(inner, 0.5 * arr * arr, ax - 0.5)
    grad = np.where(inner, arr, np.sign(arr))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def depth_loss(pred, gt, mask):
    """Mean smoothed L1 over masked entries; returns ``(loss, grad wrt pred)``."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if not (p.shape == g.shape == m.shape):
        raise DomainError("pred, gt and mask must have equal shapes")
    n = int(m.sum())
    if n == 0:
        raise UndefinedLossError("depth loss needs at least one supervised entry")
    loss, grad = smoothed_l1(p - g)
    loss, grad = np.asarray(loss), np.asarray(grad)
    return float(loss[m].sum() / n), np.where(m, grad, 0.0) / n


def total_loss_mono(cce: float, depth: float) -> float:
    return cce + depth


def total_loss_stereo(cce_left: float, cce_right: float, depth: float) -> float:
    return cce_left + cce_right + depth


def finite_diff_check(f: Callable[[float], float], grad: Callable[[float], float],
                      x0: float, h: float = 1e-5) -> float:
    """Relative error between ``grad(x0)`` and a central difference of ``f``."""
    if not h > 0:
        raise DomainError("step must be positive")
    numeric = (f(x0 + h) - f(x0 - h)) / (2.0 * h)
    analytic = grad(x0)
    scale = max(abs(analytic), abs(numeric), 1e-12)
    return abs(analytic - numeric) / scale
