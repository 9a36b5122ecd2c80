"""Procedural stereo renderer for flower-bearing bushes.

Every surface is a fronto-parallel textured disc at constant depth. A disc is
shaded as a function of its own normalized coordinates, so the right view of
a disc is an exact sub-pixel translation of its left view. Discs are drawn
far-to-near into both eyes; the painter's last write at a pixel is its
z-buffer depth and owner id.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, GenerationError
from ..geometry import PixelPoint, Point3, StereoRig, project

MAX_SEPARATION_RETRIES = 1000

# offsets from the bush reference depth, metres
_LEAF_DEPTH_OFFSET = (0.01, 0.25)
_FLOWER_DEPTH_OFFSET = (0.0, 0.008)
_BACKDROP_GAP_M = 4.0


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    n_bushes: int = 8
    flowers_per_bush: tuple[int, int] = (1, 3)
    depth_range: tuple[float, float] = (0.4, 6.0)
    flower_radius_m: tuple[float, float] = (0.02, 0.04)
    lateral_extent_m: float = 8.0
    background_style: str = "field"
    min_center_separation_px: float = 12.0
    bush_radius_m: tuple[float, float] = (0.12, 0.3)
    leaves_per_bush: tuple[int, int] = (10, 22)
    leaf_radius_m: tuple[float, float] = (0.025, 0.06)

    def __post_init__(self):
        z_near, z_far = self.depth_range
        if not 0 < z_near < z_far:
            raise DomainError(f"invalid depth range {self.depth_range}")
        for name in ("flowers_per_bush", "flower_radius_m", "bush_radius_m",
                     "leaves_per_bush", "leaf_radius_m"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise DomainError(f"{name} must be a non-empty range, got {(lo, hi)}")
        if self.flower_radius_m[0] <= 0:
            raise DomainError("flower radius must be positive")
        if self.n_bushes < 0:
            raise DomainError("n_bushes must be non-negative")
        if self.min_center_separation_px < 0:
            raise DomainError("min_center_separation_px must be >= 0")
        if self.background_style not in ("field", "plain"):
            raise DomainError(f"unknown background style {self.background_style!r}")
        if not self.seed >= 0:
            raise DomainError("seed must be non-negative")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_bushes": self.n_bushes,
            "flowers_per_bush": list(self.flowers_per_bush),
            "depth_range": list(self.depth_range),
            "flower_radius_m": list(self.flower_radius_m),
            "lateral_extent_m": self.lateral_extent_m,
            "background_style": self.background_style,
            "min_center_separation_px": self.min_center_separation_px,
            "bush_radius_m": list(self.bush_radius_m),
            "leaves_per_bush": list(self.leaves_per_bush),
            "leaf_radius_m": list(self.leaf_radius_m),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        kw = dict(d)
        for key, val in kw.items():
            if isinstance(val, list):
                kw[key] = tuple(val)
        return cls(**kw)


@dataclass(frozen=True)
class FlowerAnnotation:
    id: int
    center3: Point3
    left_px: PixelPoint
    right_px: PixelPoint
    depth_m: float
    projected_radius_px: float
    visible_left: bool
    visible_right: bool

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "x_m": self.center3.x,
            "y_m": self.center3.y,
            "z_m": self.center3.z,
            "u_left": self.left_px.u,
            "v_left": self.left_px.v,
            "u_right": self.right_px.u,
            "v_right": self.right_px.v,
            "depth_m": self.depth_m,
            "radius_px": self.projected_radius_px,
            "visible_left": self.visible_left,
            "visible_right": self.visible_right,
        }

    @classmethod
    def from_json(cls, d: dict) -> "FlowerAnnotation":
        return cls(
            id=int(d["id"]),
            center3=Point3(float(d["x_m"]), float(d["y_m"]), float(d["z_m"])),
            left_px=PixelPoint(float(d["u_left"]), float(d["v_left"])),
            right_px=PixelPoint(float(d["u_right"]), float(d["v_right"])),
            depth_m=float(d["depth_m"]),
            projected_radius_px=float(d["radius_px"]),
            visible_left=bool(d["visible_left"]),
            visible_right=bool(d["visible_right"]),
        )


@dataclass(frozen=True)
class Disc:
    """A fronto-parallel textured disc.

    ``params`` holds the shader constants; their meaning depends on ``kind``.
    """

    kind: str  # "flower" | "leaf"
    center: Point3
    radius_m: float
    rgb: tuple[float, float, float]
    params: tuple[float, ...] = ()
    flower_id: int = -1


@dataclass(frozen=True)
class Backdrop:
    style: str = "field"
    depth_m: float = 0.0
    # rows of (fx, fy, phase, amplitude), spatial frequency in cycles / metre
    waves: tuple[tuple[float, float, float, float], ...] = ()
    colors: tuple[tuple[float, float, float], tuple[float, float, float]] = (
        (0.55, 0.62, 0.68),
        (0.55, 0.62, 0.68),
    )


@dataclass
class SceneLayout:
    discs: list[Disc]
    backdrop: Backdrop
    seed: int = 0
    annotations: list[FlowerAnnotation] = field(default_factory=list)


@dataclass
class Sample:
    left_image: np.ndarray
    right_image: np.ndarray
    left_depth: np.ndarray
    right_depth: np.ndarray
    annotations: list[FlowerAnnotation]
    rig: StereoRig
    scene_seed: int = 0


def pixel_index(x: float) -> int:
    """Nearest pixel index of a sub-pixel coordinate (halves round up)."""
    return int(math.floor(x + 0.5))


def _in_image(pt: PixelPoint, rig: StereoRig) -> bool:
    w, h = rig.image_size
    return 0 <= pixel_index(pt.u) < w and 0 <= pixel_index(pt.v) < h


def _disc_footprint(disc: Disc, rig: StereoRig, eye: str):
    c = project(rig, disc.center, eye)
    return c.u, c.v, rig.focal_px * disc.radius_m / disc.center.z


def _normalized_coords(cu, cv, r_px, rows, cols):
    a = (cols[None, :] - cu) / r_px
    b = (rows[:, None] - cv) / r_px
    return a, b


def _covered(a, b):
    return a * a + b * b <= 1.0


def _shade_flower(disc: Disc, a, b):
    n_petals, phase, spiral_phase, rim = disc.params
    rho = np.sqrt(a * a + b * b)
    theta = np.arctan2(b, a)
    petals = 0.5 + 0.5 * np.cos(n_petals * theta + phase)
    swirl = 0.5 + 0.5 * np.cos(2 * np.pi * 2.5 * rho + 2 * theta + spiral_phase)
    level = 0.55 + 0.25 * petals * np.minimum(1.0, 3.0 * rho) + 0.2 * swirl * (1.0 - rho)
    level = np.where(rho > rim, 0.18, level)
    return level[..., None] * np.asarray(disc.rgb)


def _shade_leaf(disc: Disc, a, b):
    angle, freq, phase = disc.params
    along = a * math.cos(angle) + b * math.sin(angle)
    across = -a * math.sin(angle) + b * math.cos(angle)
    level = 0.8 + 0.2 * np.cos(2 * np.pi * freq * along + phase)
    level = level * (1.0 - 0.35 * np.exp(-(across / 0.07) ** 2))
    level = level * (1.0 - 0.25 * np.clip((a * a + b * b - 0.7) / 0.3, 0.0, 1.0))
    return level[..., None] * np.asarray(disc.rgb)


_SHADERS = {"flower": _shade_flower, "leaf": _shade_leaf}


def _paint_order(discs: list[Disc]) -> list[int]:
    return sorted(range(len(discs)), key=lambda k: (-discs[k].center.z, k))


def _center_owner(discs, order, rig, eye, row, col) -> int:
    """Index of the disc a painter's pass leaves at one pixel (-1 for none)."""
    rows = np.array([row], dtype=np.float64)
    cols = np.array([col], dtype=np.float64)
    owner = -1
    for k in order:
        if discs[k].center.z <= 0:
            continue
        cu, cv, r = _disc_footprint(discs[k], rig, eye)
        a, b = _normalized_coords(cu, cv, r, rows, cols)
        if _covered(a, b)[0, 0]:
            owner = k
    return owner


def annotate(discs: list[Disc], rig: StereoRig) -> list[FlowerAnnotation]:
    """Ground-truth records for every flower whose center lands in the left image."""
    order = _paint_order(discs)
    out = []
    for k, d in enumerate(discs):
        if d.kind != "flower":
            continue
        lp = project(rig, d.center, "left")
        if not _in_image(lp, rig):
            continue
        rp = project(rig, d.center, "right")
        vis_l = _center_owner(discs, order, rig, "left", pixel_index(lp.v), pixel_index(lp.u)) == k
        vis_r = _in_image(rp, rig) and _center_owner(
            discs, order, rig, "right", pixel_index(rp.v), pixel_index(rp.u)) == k
        out.append(FlowerAnnotation(
            id=d.flower_id,
            center3=d.center,
            left_px=lp,
            right_px=rp,
            depth_m=d.center.z,
            projected_radius_px=rig.focal_px * d.radius_m / d.center.z,
            visible_left=vis_l,
            visible_right=vis_r,
        ))
    return out


def _hsv(h_deg, s, v):
    return colorsys.hsv_to_rgb((h_deg % 360.0) / 360.0, s, v)


def _frustum_half_extent(rig: StereoRig, z: float) -> tuple[float, float]:
    k = rig.intrinsics
    hx = max(k.cx, k.width - k.cx) * z / k.focal_px
    hy = max(k.cy, k.height - k.cy) * z / k.focal_px
    return hx, hy


def build_layout(spec: SceneSpec, rig: StereoRig) -> SceneLayout:
    """Sample the scene geometry; deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    z_near, z_far = spec.depth_range
    discs: list[Disc] = []
    left_centers: list[tuple[float, float]] = []
    sep2 = spec.min_center_separation_px ** 2
    flower_id = 0

    for _ in range(spec.n_bushes):
        zb = rng.uniform(z_near + _FLOWER_DEPTH_OFFSET[1], z_far)
        hx, hy = _frustum_half_extent(rig, zb)
        hx = min(hx, spec.lateral_extent_m / 2.0)
        bx, by = rng.uniform(-hx, hx), rng.uniform(-hy, hy)
        rb = rng.uniform(*spec.bush_radius_m)

        for _ in range(rng.integers(spec.leaves_per_bush[0], spec.leaves_per_bush[1] + 1)):
            rr = rb * math.sqrt(rng.uniform())
            ang = rng.uniform(0, 2 * math.pi)
            z = zb + rng.uniform(*_LEAF_DEPTH_OFFSET)
            rgb = _hsv(rng.uniform(80, 140), rng.uniform(0.45, 0.8), rng.uniform(0.35, 0.7))
            params = (rng.uniform(0, math.pi), rng.uniform(1.5, 4.0), rng.uniform(0, 2 * math.pi))
            discs.append(Disc("leaf", Point3(bx + rr * math.cos(ang), by + rr * math.sin(ang), z),
                              rng.uniform(*spec.leaf_radius_m), rgb, params))

        n_flowers = rng.integers(spec.flowers_per_bush[0], spec.flowers_per_bush[1] + 1)
        for _ in range(n_flowers):
            for _attempt in range(MAX_SEPARATION_RETRIES):
                rr = 0.8 * rb * math.sqrt(rng.uniform())
                ang = rng.uniform(0, 2 * math.pi)
                z = max(z_near, zb - rng.uniform(*_FLOWER_DEPTH_OFFSET))
                center = Point3(bx + rr * math.cos(ang), by + rr * math.sin(ang), z)
                lp = project(rig, center, "left")
                if not _in_image(lp, rig):
                    break  # off-image flowers carry no annotation, so no constraint
                if all((lp.u - u) ** 2 + (lp.v - v) ** 2 >= sep2 for u, v in left_centers):
                    left_centers.append((lp.u, lp.v))
                    break
            else:
                raise GenerationError(
                    f"could not place flower {flower_id} with separation "
                    f"{spec.min_center_separation_px}px after {MAX_SEPARATION_RETRIES} tries"
                )
            hue = rng.choice([rng.uniform(325, 350), rng.uniform(350, 368)])
            rgb = _hsv(hue, rng.uniform(0.5, 0.85), rng.uniform(0.85, 1.0))
            params = (float(rng.integers(5, 8)), rng.uniform(0, 2 * math.pi),
                      rng.uniform(0, 2 * math.pi), 0.78)
            discs.append(Disc("flower", center, rng.uniform(*spec.flower_radius_m), rgb,
                              params, flower_id))
            flower_id += 1

    if spec.background_style == "field":
        waves = tuple(
            (rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 2 * math.pi), rng.uniform(0.3, 1.0))
            for _ in range(6)
        )
        colors = (_hsv(rng.uniform(28, 45), 0.55, 0.45), _hsv(rng.uniform(60, 95), 0.5, 0.5))
        backdrop = Backdrop("field", z_far + _BACKDROP_GAP_M, waves, colors)
    else:
        backdrop = Backdrop("plain")

    return SceneLayout(discs, backdrop, spec.seed, annotate(discs, rig))


def _render_backdrop(backdrop: Backdrop, rig: StereoRig, eye: str):
    w, h = rig.image_size
    img = np.empty((h, w, 3), dtype=np.float64)
    depth = np.zeros((h, w), dtype=np.float32)
    if backdrop.style == "plain" or backdrop.depth_m <= 0:
        img[:] = backdrop.colors[0]
        return img, depth
    z = backdrop.depth_m
    k = rig.intrinsics
    shift = rig.baseline_m if eye == "right" else 0.0
    xs = (np.arange(w) - k.cx) * z / k.focal_px + shift
    ys = (np.arange(h) - k.cy) * z / k.focal_px
    field_ = np.zeros((h, w))
    total = 0.0
    for fx, fy, ph, amp in backdrop.waves:
        field_ += amp * np.cos(2 * np.pi * (fx * xs[None, :] + fy * ys[:, None]) + ph)
        total += amp
    t = 0.5 + 0.5 * field_ / max(total, 1e-12)
    c0, c1 = np.asarray(backdrop.colors[0]), np.asarray(backdrop.colors[1])
    img[:] = c0 + t[..., None] * (c1 - c0)
    depth[:] = z
    return img, depth


def rasterize(layout: SceneLayout, rig: StereoRig, eye: str):
    """Render one eye. Returns (uint8 image, float32 depth, int32 owner ids)."""
    w, h = rig.image_size
    img, depth = _render_backdrop(layout.backdrop, rig, eye)
    owner = np.full((h, w), -1, dtype=np.int32)
    for k in _paint_order(layout.discs):
        disc = layout.discs[k]
        cu, cv, r = _disc_footprint(disc, rig, eye)
        c0, c1 = max(0, math.floor(cu - r) - 1), min(w, math.ceil(cu + r) + 2)
        r0, r1 = max(0, math.floor(cv - r) - 1), min(h, math.ceil(cv + r) + 2)
        if c0 >= c1 or r0 >= r1:
            continue
        a, b = _normalized_coords(cu, cv, r, np.arange(r0, r1, dtype=np.float64),
                                  np.arange(c0, c1, dtype=np.float64))
        a, b = np.broadcast_arrays(a, b)
        mask = _covered(a, b)
        if not mask.any():
            continue
        color = _SHADERS[disc.kind](disc, a[mask], b[mask])
        img[r0:r1, c0:c1][mask] = color
        depth[r0:r1, c0:c1][mask] = disc.center.z
        owner[r0:r1, c0:c1][mask] = k
    rgb = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return rgb, depth, owner


def render_layout(layout: SceneLayout, rig: StereoRig) -> Sample:
    left, left_depth, _ = rasterize(layout, rig, "left")
    right, right_depth, _ = rasterize(layout, rig, "right")
    annotations = layout.annotations or annotate(layout.discs, rig)
    return Sample(left, right, left_depth, right_depth, list(annotations), rig, layout.seed)


def render_scene(spec: SceneSpec, rig: StereoRig) -> Sample:
    return render_layout(build_layout(spec, rig), rig)


def single_flower_layout(
    center: Point3,
    radius_m: float = 0.03,
    rgb: tuple[float, float, float] = (0.95, 0.4, 0.6),
    background: str = "field",
    backdrop_depth_m: float = 10.0,
    seed: int = 0,
) -> SceneLayout:
    """Layout with exactly one flower, for fixtures and examples."""
    disc = Disc("flower", center, radius_m, rgb, (6.0, 0.3, 1.1, 0.78), 0)
    if background == "field":
        backdrop = Backdrop(
            "field", backdrop_depth_m,
            ((1.3, -0.7, 0.2, 1.0), (-2.1, 1.7, 1.9, 0.6), (0.4, 2.6, 4.0, 0.5)),
            ((0.45, 0.33, 0.2), (0.35, 0.5, 0.25)),
        )
    else:
        backdrop = Backdrop("plain")
    return SceneLayout([disc], backdrop, seed)
