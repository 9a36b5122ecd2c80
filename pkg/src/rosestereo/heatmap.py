"""Three-channel center heatmaps: near flower, distant flower, background.

Each visible flower contributes a unit-peak Gaussian to its class channel
with a width inversely proportional to its depth. Overlaps combine by
pixel-wise max so every channel stays in [0, 1], and the background channel
is ``1 - max(near, distant)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np
from scipy import ndimage

from .errors import DomainError
from .geometry import PixelPoint

FlowerClass = Literal["near", "distant"]

NEAR_DISTANT_THRESHOLD_M = 2.0
DECODE_THRESHOLD = 0.51
DEPTH_SCALE = 1.0 / 8.0
# encoding support radius in sigmas
_SUPPORT = 4.0
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Detection:
    position: PixelPoint
    cls: FlowerClass
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DomainError(f"confidence must be in [0,1], got {self.confidence}")
        if self.cls not in ("near", "distant"):
            raise DomainError(f"unknown class {self.cls!r}")

    @property
    def u(self) -> float:
        return self.position.u

    @property
    def v(self) -> float:
        return self.position.v

    def to_json(self) -> dict:
        return {"u": self.u, "v": self.v, "class": self.cls, "confidence": self.confidence}

    @classmethod
    def from_json(cls, d: dict) -> "Detection":
        return cls(PixelPoint(float(d["u"]), float(d["v"])), d["class"], float(d["confidence"]))


@dataclass(frozen=True)
class SigmaLaw:
    k: float = 8.0
    sigma_min: float = 1.5
    sigma_max: float = 16.0

    def __post_init__(self):
        if not 0 < self.sigma_min <= self.sigma_max:
            raise DomainError("need 0 < sigma_min <= sigma_max")

    def sigma(self, depth_m: float) -> float:
        if not depth_m > 0:
            raise DomainError(f"depth must be positive, got {depth_m}")
        return min(self.sigma_max, max(self.sigma_min, self.k / depth_m))


@dataclass
class HeatmapStack:
    near: np.ndarray
    distant: np.ndarray
    background: np.ndarray

    def channel(self, cls: FlowerClass) -> np.ndarray:
        return self.near if cls == "near" else self.distant

    def as_array(self) -> np.ndarray:
        """HxWx3 array in channel order (near, distant, background)."""
        return np.stack([self.near, self.distant, self.background], axis=-1)


def classify_by_depth(depth_m: float, tau: float = NEAR_DISTANT_THRESHOLD_M) -> FlowerClass:
    """Near strictly below ``tau``; a tie goes to distant."""
    if not depth_m > 0:
        raise DomainError(f"depth must be positive, got {depth_m}")
    return "near" if depth_m < tau else "distant"


def encode_heatmaps(
    annotations: Iterable,
    image_size: tuple[int, int],
    tau: float = NEAR_DISTANT_THRESHOLD_M,
    law: SigmaLaw = SigmaLaw(),
    eye: str = "left",
) -> HeatmapStack:
    """Rasterize flower centers of one eye into a heatmap stack.

    ``annotations`` are :class:`FlowerAnnotation`-like records; those not
    visible in ``eye`` are skipped.
    """
    w, h = image_size
    near = np.zeros((h, w), dtype=np.float64)
    distant = np.zeros((h, w), dtype=np.float64)
    for a in annotations:
        visible = a.visible_left if eye == "left" else a.visible_right
        if not visible:
            continue
        u, v = a.left_px if eye == "left" else a.right_px
        sigma = law.sigma(a.depth_m)
        target = near if classify_by_depth(a.depth_m, tau) == "near" else distant
        reach = _SUPPORT * sigma
        c0, c1 = max(0, math.floor(u - reach)), min(w, math.ceil(u + reach) + 1)
        r0, r1 = max(0, math.floor(v - reach)), min(h, math.ceil(v + reach) + 1)
        if c0 >= c1 or r0 >= r1:
            continue
        gx = np.exp(-((np.arange(c0, c1) - u) ** 2) / (2 * sigma * sigma))
        gy = np.exp(-((np.arange(r0, r1) - v) ** 2) / (2 * sigma * sigma))
        # unit value on the pixel nearest a sub-pixel center
        gx /= gx.max()
        gy /= gy.max()
        np.maximum(target[r0:r1, c0:c1], gy[:, None] * gx[None, :], out=target[r0:r1, c0:c1])
    background = 1.0 - np.maximum(near, distant)
    return HeatmapStack(near, distant, background)


def _border_window(peak: tuple[int, int], shape: tuple[int, int]) -> tuple[slice, slice]:
    """Largest window centered on ``peak`` that fits inside the image."""
    (r, c), (h, w) = peak, shape
    hr, hc = min(r, h - 1 - r), min(c, w - 1 - c)
    return slice(r - hr, r + hr + 1), slice(c - hc, c + hc + 1)


def decode_heatmaps(stack: HeatmapStack, threshold: float = DECODE_THRESHOLD) -> list[Detection]:
    """Connected-component peaks of each class channel above ``threshold``.

    Position is the value-weighted centroid of the component, confidence its
    peak value. A component cut by the image border would have its centroid
    pulled inward, so for those the centroid is taken over the part of the
    component inside a window centered on its peak pixel. Components are
    reported per channel in row-major order of their first pixel, near
    channel first.
    """
    if not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must lie in (0,1), got {threshold}")
    out: list[Detection] = []
    for cls in ("near", "distant"):
        chan = np.asarray(stack.channel(cls), dtype=np.float64)
        h, w = chan.shape
        labels, n = ndimage.label(chan >= threshold, structure=_EIGHT_CONNECTED)
        if n == 0:
            continue
        idx = np.arange(1, n + 1)
        peaks = ndimage.maximum_position(chan, labels, idx)
        for k, box in enumerate(ndimage.find_objects(labels)):
            rs, cs = box
            if rs.start == 0 or cs.start == 0 or rs.stop == h or cs.stop == w:
                rs, cs = _border_window(peaks[k], (h, w))
            vals = np.where(labels[rs, cs] == k + 1, chan[rs, cs], 0.0)
            total = vals.sum()
            rows = np.arange(rs.start, rs.stop)
            cols = np.arange(cs.start, cs.stop)
            u = float(vals.sum(axis=0) @ cols / total)
            v = float(vals.sum(axis=1) @ rows / total)
            peak = float(chan[peaks[k]])
            out.append(Detection(PixelPoint(u, v), cls, min(1.0, peak)))
    return out


def scale_depth(d):
    return d * DEPTH_SCALE


def unscale_depth(s):
    return s / DEPTH_SCALE
