"""Template matching along rectified scanlines.

A square template around each left-image point is scored against every
integer position of a horizontal strip in the right image whose disparity
range comes from the admissible depth range. The best position is then
re-searched on a bilinearly upsampled grid for a sub-pixel match, and depth
follows from triangulation.

Two scores are supported: ``nccorr`` (normalized cross-correlation on raw
intensities) and ``nccoef`` (the same on mean-subtracted patches, invariant
to affine brightness changes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateMatchError, DomainError, NoMatchError
from .geometry import PixelPoint, StereoRig, disparity_bounds, triangulate_depth
from .heatmap import Detection
from .scenegen.render import pixel_index

METHODS = ("nccorr", "nccoef")
BORDER_POLICIES = ("replicate_pad", "reject")
# a patch whose (mean-removed) energy is below this fraction of its raw
# energy counts as textureless
_DEGENERATE_RTOL = 1e-10
# scores this close to the best count as tied (rounding noise of the sums)
_TIE_ATOL = 1e-12


@dataclass(frozen=True)
class MatchConfig:
    template_size: int = 32
    method: str = "nccoef"
    z_min: float = 0.25
    z_max: float = 8.0
    upscale_factor: int = 4
    refine_halfwidth_px: int = 2
    vertical_tolerance_rows: int = 0
    border_policy: str = "replicate_pad"

    def __post_init__(self):
        if self.template_size < 8 or self.template_size % 2:
            raise DomainError("template_size must be even and >= 8")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if not 0 < self.z_min < self.z_max:
            raise DomainError(f"invalid depth range ({self.z_min}, {self.z_max})")
        if self.upscale_factor < 1:
            raise DomainError("upscale_factor must be >= 1")
        if self.refine_halfwidth_px < 0 or self.vertical_tolerance_rows < 0:
            raise DomainError("refine_halfwidth_px and vertical_tolerance_rows must be >= 0")
        if self.border_policy not in BORDER_POLICIES:
            raise DomainError(f"unknown border policy {self.border_policy!r}")


@dataclass(frozen=True)
class MatchResult:
    u_left: float
    v_left: float
    right_u: float
    row: int
    score: float
    disparity: float
    depth_m: float
    method: str
    # "coarse" (no refinement requested), "refined", or "fallback"
    refinement: str = "coarse"

    @property
    def status(self) -> str:
        return "ok" if self.refinement != "fallback" else "ok_unrefined"

    def to_json(self) -> dict:
        return {
            "u_left": self.u_left,
            "v_left": self.v_left,
            "right_u": self.right_u,
            "score": self.score,
            "disparity": self.disparity,
            "depth_m": self.depth_m,
            "method": self.method,
            "status": self.status,
        }


@dataclass(frozen=True)
class MatchFailure:
    u_left: float
    v_left: float
    reason: str  # "no_match" | "degenerate"
    message: str = ""
    method: str = ""

    status = "failed"

    def to_json(self) -> dict:
        return {
            "u_left": self.u_left,
            "v_left": self.v_left,
            "right_u": None,
            "score": None,
            "disparity": None,
            "depth_m": None,
            "method": self.method,
            "status": f"failed:{self.reason}",
        }


def grayscale(image: np.ndarray) -> np.ndarray:
    """Luma with fixed integer weights, ``(299 r + 587 g + 114 b) / 1000``."""
    img = np.asarray(image)
    if img.ndim == 2:
        return img.astype(np.float64)
    rgb = img.astype(np.int64)
    return (rgb[..., 0] * 299 + rgb[..., 1] * 587 + rgb[..., 2] * 114) / 1000.0


# -- scores -----------------------------------------------------------------

def _as_pair(template, window):
    t = np.asarray(template, dtype=np.float64)
    w = np.asarray(window, dtype=np.float64)
    if t.shape != w.shape:
        raise DomainError(f"template {t.shape} and window {w.shape} differ in shape")
    return t, w


def nccorr_score(template, window) -> float:
    t, w = _as_pair(template, window)
    et, ew = float(np.sum(t * t)), float(np.sum(w * w))
    if et <= 0 or ew <= 0:
        raise DegenerateMatchError("zero-energy patch")
    return float(np.sum(t * w) / math.sqrt(et * ew))


def nccoef_score(template, window) -> float:
    t, w = _as_pair(template, window)
    tc = t - t.mean()
    wc = w - w.mean()
    vt, vw = float(np.sum(tc * tc)), float(np.sum(wc * wc))
    if vt <= _DEGENERATE_RTOL * float(np.sum(t * t)) or vw <= _DEGENERATE_RTOL * float(np.sum(w * w)):
        raise DegenerateMatchError("zero-variance patch")
    return float(np.sum(tc * wc) / math.sqrt(vt * vw))


_SCORERS = {"nccorr": nccorr_score, "nccoef": nccoef_score}


def naive_strip_scores(template, strip, method: str) -> np.ndarray:
    """Direct per-position evaluation; the reference for :func:`strip_scores`.

    Degenerate windows score NaN. A degenerate template raises.
    """
    t = np.asarray(template, dtype=np.float64)
    s = np.asarray(strip, dtype=np.float64)
    th, tw = t.shape
    score = _SCORERS[method]
    out = np.full((s.shape[0] - th + 1, s.shape[1] - tw + 1), np.nan)
    _check_template(t, method)
    for r in range(out.shape[0]):
        for c in range(out.shape[1]):
            try:
                out[r, c] = score(t, s[r:r + th, c:c + tw])
            except DegenerateMatchError:
                pass
    return out


def _check_template(t, method):
    energy = float(np.sum(t * t))
    if method == "nccorr":
        if energy <= 0:
            raise DegenerateMatchError("zero-energy template")
    else:
        tc = t - t.mean()
        if float(np.sum(tc * tc)) <= _DEGENERATE_RTOL * energy:
            raise DegenerateMatchError("zero-variance template")


def _box_sums(a: np.ndarray, th: int, tw: int) -> np.ndarray:
    ii = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=ii[1:, 1:])
    return ii[th:, tw:] - ii[:-th, tw:] - ii[th:, :-tw] + ii[:-th, :-tw]


def strip_scores(template, strip, method: str) -> np.ndarray:
    """Scores of ``template`` at every valid offset in ``strip``.

    Window energies and means come from integral images; only the cross
    term touches every template pixel. Degenerate windows score NaN.
    """
    t = np.asarray(template, dtype=np.float64)
    s = np.asarray(strip, dtype=np.float64)
    th, tw = t.shape
    if s.shape[0] < th or s.shape[1] < tw:
        raise NoMatchError("strip smaller than template")
    _check_template(t, method)
    n = th * tw
    windows = sliding_window_view(s, (th, tw))
    if method == "nccorr":
        cross = np.tensordot(windows, t, axes=([2, 3], [0, 1]))
        e_w = _box_sums(s * s, th, tw)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = cross / np.sqrt(float(np.sum(t * t)) * e_w)
        out[~(e_w > 0)] = np.nan
        return out
    tc = t - t.mean()
    # centering the strip leaves NCCoef unchanged and keeps the box sums small
    sc = s - s.mean()
    cross = np.tensordot(sliding_window_view(sc, (th, tw)), tc, axes=([2, 3], [0, 1]))
    s1 = _box_sums(sc, th, tw)
    s2 = _box_sums(sc * sc, th, tw)
    var_w = s2 - s1 * s1 / n
    # cancellation residue in var_w scales with the centered energy s2
    scale = np.maximum(_box_sums(s * s, th, tw), s2)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = cross / np.sqrt(float(np.sum(tc * tc)) * var_w)
    out[~(var_w > _DEGENERATE_RTOL * scale)] = np.nan
    return out


# -- search -----------------------------------------------------------------

def _gather(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sub-array at index vectors, replicating edge pixels out of range."""
    h, w = img.shape
    return img[np.ix_(np.clip(rows, 0, h - 1), np.clip(cols, 0, w - 1))]


def _best_index(scores: np.ndarray, preference: np.ndarray) -> int:
    """Flat argmax; ties resolved by the smallest ``preference`` key."""
    flat = np.where(np.isnan(scores), -np.inf, scores).ravel()
    top = flat.max()
    if not np.isfinite(top):
        raise NoMatchError("every candidate window is degenerate")
    tied = np.flatnonzero(flat >= top - _TIE_ATOL)
    return int(tied[np.argmin(preference.ravel()[tied])])


def _result(rig, left_pt, disparity, row, score, method, refinement) -> MatchResult:
    depth = triangulate_depth(rig, disparity)
    return MatchResult(
        u_left=float(left_pt[0]),
        v_left=float(left_pt[1]),
        right_u=float(left_pt[0]) - disparity,
        row=int(row),
        score=float(score),
        disparity=float(disparity),
        depth_m=depth,
        method=method,
        refinement=refinement,
    )


def coarse_search(left_gray, right_gray, left_pt, rig: StereoRig, cfg: MatchConfig,
                  scorer=strip_scores) -> MatchResult:
    """Integer-pixel best match of the template on the epipolar strip."""
    h, w = left_gray.shape
    half = cfg.template_size // 2
    u0, v0 = pixel_index(left_pt[0]), pixel_index(left_pt[1])
    if not (0 <= u0 < w and 0 <= v0 < h):
        raise NoMatchError(f"left point {tuple(left_pt)} outside the image")
    reject = cfg.border_policy == "reject"
    if reject and not (half <= u0 <= w - half and half <= v0 <= h - half):
        raise NoMatchError("template crosses the image border")

    d_lo, d_hi = disparity_bounds(rig, cfg.z_min, cfg.z_max)
    disps = np.arange(max(1, math.ceil(d_lo)), math.floor(d_hi) + 1)
    cols = u0 - disps
    vt = cfg.vertical_tolerance_rows
    rows = v0 + np.arange(-vt, vt + 1)
    if reject:
        disps = disps[(cols >= half) & (cols <= w - half)]
        rows = rows[(rows >= half) & (rows <= h - half)]
    else:
        # candidates whose window lies wholly in the padding are meaningless
        disps = disps[(cols + half > 0) & (cols - half < w)]
    if disps.size == 0 or rows.size == 0:
        raise NoMatchError("empty search strip")
    cols = u0 - disps

    t_idx = np.arange(-half, half)
    template = _gather(left_gray, v0 + t_idx, u0 + t_idx)
    c_min, c_max = int(cols.min()), int(cols.max())
    r_min, r_max = int(rows.min()), int(rows.max())
    strip = _gather(right_gray, np.arange(r_min - half, r_max + half),
                    np.arange(c_min - half, c_max + half))
    scores = scorer(template, strip, cfg.method)
    # scores[i, j] is centered at row r_min + i, column c_min + j
    scores = scores[rows - r_min][:, cols - c_min]
    dv = np.abs(rows - v0)[:, None]
    pref = disps[None, :] * (2 * vt + 2) + dv
    k = _best_index(scores, pref)
    i, j = divmod(k, scores.shape[1])
    return _result(rig, left_pt, int(disps[j]), rows[i], scores[i, j], cfg.method, "coarse")


def upsample_bilinear(region: np.ndarray, factor: int, out_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear samples at ``(i/factor, j/factor)`` for an ``out_shape`` grid."""
    def axis_weights(n_out, n_in):
        p = np.arange(n_out) / factor
        i0 = np.floor(p).astype(np.int64)
        f = p - i0
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, f

    r0, r1, fr = axis_weights(out_shape[0], region.shape[0])
    c0, c1, fc = axis_weights(out_shape[1], region.shape[1])
    rows = region[r0] * (1 - fr)[:, None] + region[r1] * fr[:, None]
    return rows[:, c0] * (1 - fc)[None, :] + rows[:, c1] * fc[None, :]


def refine_subpixel(left_gray, right_gray, coarse: MatchResult, cfg: MatchConfig,
                    rig: StereoRig) -> MatchResult:
    """Re-search a neighborhood of ``coarse`` on an upsampled grid.

    The candidate grid contains the coarse position, so the chosen score is
    never below the upsampled-grid score at the coarse position. Returns the
    coarse result marked ``fallback`` when the neighborhood leaves the image
    or the re-search is degenerate.
    """
    k = cfg.upscale_factor
    if k == 1:
        return coarse
    h, w = left_gray.shape
    half = cfg.template_size // 2
    hw = cfg.refine_halfwidth_px
    u0, v0 = pixel_index(coarse.u_left), pixel_index(coarse.v_left)
    c = int(round(u0 - coarse.disparity))
    r = coarse.row
    fallback = replace(coarse, refinement="fallback")
    inside = (
        v0 - half >= 0 and v0 + half < h and u0 - half >= 0 and u0 + half < w
        and r - half >= 0 and r + half < h and c - hw - half >= 0 and c + hw + half < w
    )
    if not inside:
        return fallback

    size = cfg.template_size * k
    template = upsample_bilinear(
        left_gray[v0 - half:v0 + half + 1, u0 - half:u0 + half + 1], k, (size, size))
    strip = upsample_bilinear(
        right_gray[r - half:r + half + 1, c - hw - half:c + hw + half + 1], k,
        (size, (cfg.template_size + 2 * hw) * k))
    try:
        scores = strip_scores(template, strip, cfg.method)
    except (DegenerateMatchError, NoMatchError):
        return fallback
    offsets = (np.arange(scores.shape[1]) - hw * k) / k
    disps = u0 - (c + offsets)
    try:
        j = _best_index(scores, disps[None, :])
    except NoMatchError:
        return fallback
    disparity = float(disps[j])
    if not disparity > 0:
        return fallback
    return _result(rig, (coarse.u_left, coarse.v_left), disparity, r, scores[0, j],
                   cfg.method, "refined")


def search_scanline(left_img, right_img, left_pt, rig: StereoRig,
                    cfg: MatchConfig = MatchConfig()) -> MatchResult:
    """Match one left-image point into the right image and triangulate it."""
    left_gray = grayscale(left_img)
    right_gray = grayscale(right_img)
    coarse = coarse_search(left_gray, right_gray, left_pt, rig, cfg)
    return refine_subpixel(left_gray, right_gray, coarse, cfg, rig)


def estimate_depths(sample, detections: Sequence[Detection], rig: StereoRig,
                    cfg: MatchConfig = MatchConfig()) -> list[tuple[Detection, MatchResult | MatchFailure]]:
    """Per-detection match and depth; failures are kept, never dropped."""
    if not detections:
        return []
    left_gray = grayscale(sample.left_image)
    right_gray = grayscale(sample.right_image)
    out = []
    for det in detections:
        pt = PixelPoint(det.u, det.v)
        try:
            coarse = coarse_search(left_gray, right_gray, pt, rig, cfg)
            res = refine_subpixel(left_gray, right_gray, coarse, cfg, rig)
        except DegenerateMatchError as exc:
            res = MatchFailure(det.u, det.v, "degenerate", str(exc), cfg.method)
        except (NoMatchError, DomainError) as exc:
            res = MatchFailure(det.u, det.v, "no_match", str(exc), cfg.method)
        out.append((det, res))
    return out
