"""Rectified stereo pinhole model.

The left camera is the world origin, +z looks forward and the right camera
sits at +baseline along x. Disparity is ``u_left - u_right`` and is
non-negative for points in front of the rig.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

from .errors import DomainError

Eye = Literal["left", "right"]

# Physical parameters of the reference stereo camera.
CAMERA_FOCAL_LENGTH_MM = 26.0
CAMERA_PIXEL_PITCH_MM = 0.325
CAMERA_BASELINE_M = 0.065

# Dataset render defaults; see CameraIntrinsics.focal_px_override.
DATASET_IMAGE_SIZE = (640, 480)
DATASET_FOCAL_PX = 1000.0


class Point3(NamedTuple):
    x: float
    y: float
    z: float


class PixelPoint(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length_mm: float
    pixel_pitch_mm: float
    image_size: tuple[int, int]
    principal_point: tuple[float, float] | None = None
    # Replaces focal_length_mm / pixel_pitch_mm when set.
    focal_px_override: float | None = None

    def __post_init__(self):
        if not (self.focal_length_mm > 0 and self.pixel_pitch_mm > 0):
            raise DomainError("focal length and pixel pitch must be positive")
        w, h = self.image_size
        if int(w) != w or int(h) != h or w <= 0 or h <= 0:
            raise DomainError(f"image size must be positive integers, got {self.image_size}")
        object.__setattr__(self, "image_size", (int(w), int(h)))
        if self.principal_point is None:
            object.__setattr__(self, "principal_point", (w / 2.0, h / 2.0))
        cx, cy = self.principal_point
        if not (0 <= cx < w and 0 <= cy < h):
            raise DomainError(f"principal point {self.principal_point} outside image")
        if self.focal_px_override is not None and not self.focal_px_override > 0:
            raise DomainError("focal_px_override must be positive")

    @property
    def focal_px(self) -> float:
        if self.focal_px_override is not None:
            return float(self.focal_px_override)
        return self.focal_length_mm / self.pixel_pitch_mm

    @property
    def cx(self) -> float:
        return float(self.principal_point[0])

    @property
    def cy(self) -> float:
        return float(self.principal_point[1])

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]


@dataclass(frozen=True)
class StereoRig:
    intrinsics: CameraIntrinsics
    baseline_m: float = CAMERA_BASELINE_M
    _bf: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.baseline_m > 0:
            raise DomainError("baseline must be positive")
        object.__setattr__(self, "_bf", self.baseline_m * self.intrinsics.focal_px)

    @property
    def focal_px(self) -> float:
        return self.intrinsics.focal_px

    @property
    def image_size(self) -> tuple[int, int]:
        return self.intrinsics.image_size

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {
            "focal_length_mm": k.focal_length_mm,
            "pixel_pitch_mm": k.pixel_pitch_mm,
            "focal_px_override": k.focal_px_override,
            "cx": k.cx,
            "cy": k.cy,
            "width": k.width,
            "height": k.height,
            "baseline_m": self.baseline_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StereoRig":
        width, height = int(d["width"]), int(d["height"])
        pp = None
        if d.get("cx") is not None and d.get("cy") is not None:
            pp = (float(d["cx"]), float(d["cy"]))
        intr = CameraIntrinsics(
            focal_length_mm=float(d["focal_length_mm"]),
            pixel_pitch_mm=float(d["pixel_pitch_mm"]),
            image_size=(width, height),
            principal_point=pp,
            focal_px_override=d.get("focal_px_override"),
        )
        return cls(intr, float(d["baseline_m"]))


def camera_rig(image_size: tuple[int, int] = DATASET_IMAGE_SIZE) -> StereoRig:
    """Rig with the physical camera's focal length, pixel pitch and baseline.

    Its focal length in pixels is 80, far too short for 32 px templates on
    flower-sized targets; use :func:`dataset_rig` for synthetic scenes.
    """
    intr = CameraIntrinsics(CAMERA_FOCAL_LENGTH_MM, CAMERA_PIXEL_PITCH_MM, image_size)
    return StereoRig(intr, CAMERA_BASELINE_M)


def dataset_rig(
    image_size: tuple[int, int] = DATASET_IMAGE_SIZE,
    focal_px: float = DATASET_FOCAL_PX,
    baseline_m: float = CAMERA_BASELINE_M,
) -> StereoRig:
    intr = CameraIntrinsics(
        CAMERA_FOCAL_LENGTH_MM,
        CAMERA_PIXEL_PITCH_MM,
        image_size,
        focal_px_override=focal_px,
    )
    return StereoRig(intr, baseline_m)


def project(rig: StereoRig, p: Point3, eye: Eye = "left") -> PixelPoint:
    x, y, z = p
    if not z > 0:
        raise DomainError(f"cannot project point with z={z}")
    k = rig.intrinsics
    f = k.focal_px
    if eye == "left":
        u = f * x / z + k.cx
    elif eye == "right":
        u = f * (x - rig.baseline_m) / z + k.cx
    else:
        raise DomainError(f"unknown eye {eye!r}")
    return PixelPoint(u, f * y / z + k.cy)


def disparity_of_depth(rig: StereoRig, z: float) -> float:
    if not z > 0:
        raise DomainError(f"depth must be positive, got {z}")
    return rig._bf / z


def triangulate_depth(rig: StereoRig, disparity: float) -> float:
    """Metric depth from a positive disparity: ``baseline * focal / disparity``."""
    if not disparity > 0:
        raise DomainError(f"disparity must be positive, got {disparity}")
    return rig._bf / disparity


def backproject(rig: StereoRig, left_pt: PixelPoint, depth: float) -> Point3:
    if not depth > 0:
        raise DomainError(f"depth must be positive, got {depth}")
    k = rig.intrinsics
    u, v = left_pt
    return Point3((u - k.cx) * depth / k.focal_px, (v - k.cy) * depth / k.focal_px, depth)


def disparity_bounds(rig: StereoRig, z_min: float, z_max: float) -> tuple[float, float]:
    """Disparity interval spanned by depths in ``[z_min, z_max]``."""
    if not (0 < z_min < z_max) or math.isinf(z_max):
        raise DomainError(f"invalid depth range ({z_min}, {z_max})")
    return rig._bf / z_max, rig._bf / z_min
