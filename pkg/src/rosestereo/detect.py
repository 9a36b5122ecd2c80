"""Classical flower-center detector: color threshold, morphology, components.

Stands in for a learned localizer behind the same contract: an RGB image in,
a list of :class:`~rosestereo.heatmap.Detection` out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import ndimage

from .errors import DomainError
from .geometry import PixelPoint
from .heatmap import Detection

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class DetectorParams:
    # bounds on (rotated hue, saturation, value), each 0..255
    color_lower: tuple[int, int, int] = (96, 70, 60)
    color_upper: tuple[int, int, int] = (140, 255, 255)
    min_area_px: int = 10
    morph_radius_px: int = 1
    near_radius_threshold_px: float = 7.5

    def __post_init__(self):
        if len(self.color_lower) != 3 or len(self.color_upper) != 3:
            raise DomainError("color bounds need three channels")
        if any(lo > hi for lo, hi in zip(self.color_lower, self.color_upper)):
            raise DomainError(f"lower bound {self.color_lower} exceeds upper {self.color_upper}")
        if self.min_area_px < 1:
            raise DomainError("min_area_px must be >= 1")
        if self.morph_radius_px < 0:
            raise DomainError("morph_radius_px must be >= 0")


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    centroid: PixelPoint
    bbox: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)


class Detector(Protocol):
    def __call__(self, image: np.ndarray) -> list[Detection]: ...


def hue_sat_val(image: np.ndarray) -> np.ndarray:
    """Integer hue/saturation/value transform, each channel in 0..255.

    Hue is the usual hexcone angle scaled to 256 steps and rotated by half a
    turn, so reds and pinks sit mid-range and a single interval covers them.
    Only integer arithmetic is used.
    """
    rgb = np.asarray(image, dtype=np.int64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = v - mn
    safe_v = np.maximum(v, 1)
    s = np.where(v > 0, (255 * delta + safe_v // 2) // safe_v, 0)

    safe_d = np.maximum(delta, 1)
    # position on a 6*delta circumference: red sector 0, green 2, blue 4
    pos = np.where(v == r, g - b, np.where(v == g, 2 * delta + (b - r), 4 * delta + (r - g)))
    pos = np.mod(pos, 6 * safe_d)
    h = (pos * 256) // (6 * safe_d)
    h = np.where(delta > 0, h, 0)
    h = (h + 128) % 256
    return np.stack([h, s, v], axis=-1)


def threshold_color(image: np.ndarray, params: DetectorParams = DetectorParams()) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DomainError("expected an HxWx3 image")
    hsv = hue_sat_val(img)
    lo = np.asarray(params.color_lower)
    hi = np.asarray(params.color_upper)
    return np.all((hsv >= lo) & (hsv <= hi), axis=-1)


def morph_open_close(mask: np.ndarray, radius: int) -> np.ndarray:
    """Opening then closing with a ``(2r+1)`` square; pixels beyond the border count as background."""
    if radius < 0:
        raise DomainError("radius must be >= 0")
    m = np.asarray(mask, dtype=bool)
    if radius == 0:
        return m.copy()
    se = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    opened = ndimage.binary_opening(m, structure=se)
    # pad so closing cannot pull in the implicit border
    p = radius
    closed = ndimage.binary_closing(np.pad(opened, p), structure=se)
    return closed[p:-p, p:-p]


def connected_components(mask: np.ndarray) -> list[Component]:
    """8-connected components labeled in row-major order of their first pixel."""
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT_CONNECTED)
    if n == 0:
        return []
    idx = np.arange(1, n + 1)
    area = ndimage.sum_labels(np.ones_like(labels), labels, idx)
    cent = ndimage.center_of_mass(np.ones_like(labels), labels, idx)
    slices = ndimage.find_objects(labels)
    out = []
    for k in range(n):
        sl = slices[k]
        out.append(Component(
            label=k + 1,
            area=int(area[k]),
            centroid=PixelPoint(float(cent[k][1]), float(cent[k][0])),
            bbox=(sl[0].start, sl[1].start, sl[0].stop, sl[1].stop),
        ))
    return out


def blob_detect(image: np.ndarray, params: DetectorParams = DetectorParams()) -> list[Detection]:
    raw = threshold_color(image, params)
    clean = morph_open_close(raw, params.morph_radius_px)
    labels, n = ndimage.label(clean, structure=_EIGHT_CONNECTED)
    if n == 0:
        return []
    out = []
    for comp in connected_components(clean):
        if comp.area < params.min_area_px:
            continue
        r0, c0, r1, c1 = comp.bbox
        member = labels[r0:r1, c0:c1] == comp.label
        confidence = float(raw[r0:r1, c0:c1][member].mean())
        radius = math.sqrt(comp.area / math.pi)
        cls = "near" if radius >= params.near_radius_threshold_px else "distant"
        out.append(Detection(comp.centroid, cls, confidence))
    return out


class BlobDetector:
    def __init__(self, params: DetectorParams = DetectorParams()):
        self.params = params

    def __call__(self, image: np.ndarray) -> list[Detection]:
        return blob_detect(image, self.params)
