"""Photometric augmentation applied identically to both eyes."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .render import Sample


@dataclass(frozen=True)
class AugmentSpec:
    brightness_delta: tuple[int, int] = (0, 0)
    contrast_gain: tuple[float, float] = (1.0, 1.0)
    noise_sigma: float = 0.0
    sunflare: bool = False
    rain: bool = False
    seed: int = 0

    def is_identity(self) -> bool:
        return (
            tuple(self.brightness_delta) == (0, 0)
            and tuple(self.contrast_gain) == (1.0, 1.0)
            and self.noise_sigma <= 0
            and not self.sunflare
            and not self.rain
        )

    def to_dict(self) -> dict:
        return {
            "brightness_delta": list(self.brightness_delta),
            "contrast_gain": list(self.contrast_gain),
            "noise_sigma": self.noise_sigma,
            "sunflare": self.sunflare,
            "rain": self.rain,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentSpec":
        return cls(
            brightness_delta=tuple(int(x) for x in d.get("brightness_delta", (0, 0))),
            contrast_gain=tuple(float(x) for x in d.get("contrast_gain", (1.0, 1.0))),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            sunflare=bool(d.get("sunflare", False)),
            rain=bool(d.get("rain", False)),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class _Draw:
    brightness: int
    gain: float
    noise: np.ndarray | None
    flare: np.ndarray | None
    rain: np.ndarray | None


def _draw(aug: AugmentSpec, shape: tuple[int, int]) -> _Draw:
    rng = np.random.default_rng(aug.seed)
    h, w = shape
    lo, hi = sorted(int(x) for x in aug.brightness_delta)
    brightness = int(rng.integers(lo, hi + 1))
    g_lo, g_hi = sorted(max(1e-3, float(x)) for x in aug.contrast_gain)
    gain = float(rng.uniform(g_lo, g_hi)) if g_hi > g_lo else g_lo

    noise = None
    if aug.noise_sigma > 0:
        noise = rng.normal(0.0, aug.noise_sigma, size=(h, w, 1))

    flare = None
    if aug.sunflare:
        cu, cv = rng.uniform(0, w), rng.uniform(0, h * 0.5)
        radius = rng.uniform(0.3, 0.8) * max(w, h)
        strength = rng.uniform(60.0, 140.0)
        yy, xx = np.mgrid[0:h, 0:w]
        d = np.hypot(xx - cu, yy - cv)
        flare = (strength * np.clip(1.0 - d / radius, 0.0, 1.0) ** 2)[..., None]

    rain = None
    if aug.rain:
        rain = np.zeros((h, w, 1))
        slant = rng.uniform(-0.3, 0.3)
        for _ in range(int(rng.integers(80, 200))):
            x0, y0 = rng.uniform(0, w), rng.uniform(0, h)
            length = rng.uniform(6, 18)
            level = rng.uniform(25, 60)
            for t in range(int(math.ceil(length))):
                y = int(y0 + t)
                x = int(round(x0 + slant * t))
                if 0 <= y < h and 0 <= x < w:
                    rain[y, x, 0] = level
    return _Draw(brightness, gain, noise, flare, rain)


def _apply(img: np.ndarray, d: _Draw) -> np.ndarray:
    x = img.astype(np.float64)
    if d.gain != 1.0:
        mean = x.mean()
        x = d.gain * (x - mean) + mean
    x += d.brightness
    if d.flare is not None:
        x += d.flare
    if d.rain is not None:
        x += d.rain
    if d.noise is not None:
        x += d.noise
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def augment(sample: Sample, aug: AugmentSpec) -> Sample:
    """Augmented copy of ``sample``; depth rasters and annotations are shared."""
    if aug.is_identity():
        return replace(sample, left_image=sample.left_image.copy(),
                       right_image=sample.right_image.copy())
    d = _draw(aug, sample.left_image.shape[:2])
    return replace(sample, left_image=_apply(sample.left_image, d),
                   right_image=_apply(sample.right_image, d))
