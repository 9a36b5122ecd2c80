"""Point-detection and depth evaluation.

Detections match ground truth inside a square (Chebyshev) window. Matching
is greedy and one-to-one: predictions above the confidence threshold are
visited in descending confidence and take the nearest free ground truth of
the same class.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError
from .geometry import PixelPoint
from .heatmap import Detection, classify_by_depth
from .stereomatch import estimate_depths

CLASSES = ("near", "distant")
DEFAULT_BUCKET_EDGES = tuple(float(x) for x in range(7))


@dataclass(frozen=True)
class MatchRule:
    window_px: int = 5
    confidence_threshold: float = 0.51

    def __post_init__(self):
        if self.window_px < 0:
            raise DomainError("window_px must be >= 0")
        if not 0 < self.confidence_threshold < 1:
            raise DomainError("confidence_threshold must lie in (0,1)")


@dataclass(frozen=True)
class GroundTruthPoint:
    position: PixelPoint
    cls: str
    depth_m: float = 0.0
    # false when the point is hidden in the right view: no correspondence exists
    stereo_valid: bool = True

    @property
    def u(self) -> float:
        return self.position.u

    @property
    def v(self) -> float:
        return self.position.v


@dataclass
class ClassMatches:
    tp_pairs: list[tuple[int, int]] = field(default_factory=list)  # (pred idx, gt idx)
    fp: list[int] = field(default_factory=list)
    fn: list[int] = field(default_factory=list)


def chebyshev(a, b) -> float:
    return max(abs(a.u - b.u), abs(a.v - b.v))


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruthPoint],
    rule: MatchRule = MatchRule(),
    class_aware: bool = True,
) -> dict[str, ClassMatches]:
    """Greedy one-to-one matching, keyed by class.

    Indices refer to positions in ``preds`` and ``gts``. With
    ``class_aware=False`` every prediction may take any ground truth and
    results are filed under the prediction's class.
    """
    out = {c: ClassMatches() for c in CLASSES}
    kept = [i for i, p in enumerate(preds) if p.confidence >= rule.confidence_threshold]
    # stable sort: equal confidences keep input order
    kept.sort(key=lambda i: -preds[i].confidence)
    taken = [False] * len(gts)
    for i in kept:
        p = preds[i]
        best, best_key = -1, None
        for j, g in enumerate(gts):
            if taken[j] or (class_aware and g.cls != p.cls):
                continue
            d = chebyshev(p, g)
            if d > rule.window_px:
                continue
            key = (d, math.hypot(p.u - g.u, p.v - g.v), j)
            if best_key is None or key < best_key:
                best, best_key = j, key
        if best < 0:
            out[p.cls].fp.append(i)
        else:
            taken[best] = True
            out[p.cls].tp_pairs.append((i, best))
    for j, g in enumerate(gts):
        if not taken[j]:
            out[g.cls].fn.append(j)
    return out


@dataclass(frozen=True)
class ClassScores:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f_score(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def __add__(self, other: "ClassScores") -> "ClassScores":
        return ClassScores(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f_score": self.f_score}


@dataclass(frozen=True)
class DetectionReport:
    per_class: dict[str, ClassScores]

    @property
    def overall(self) -> ClassScores:
        total = ClassScores(0, 0, 0)
        for s in self.per_class.values():
            total = total + s
        return total

    def to_dict(self) -> dict:
        d = {c: s.to_dict() for c, s in self.per_class.items()}
        d["overall"] = self.overall.to_dict()
        return d


def detection_metrics(matches: dict[str, ClassMatches] | Iterable[dict[str, ClassMatches]]) -> DetectionReport:
    """Precision/recall/F per class; accepts one match dict or many (summed)."""
    batches = [matches] if isinstance(matches, dict) else list(matches)
    counts = {c: ClassScores(0, 0, 0) for c in CLASSES}
    for m in batches:
        for c in CLASSES:
            cm = m[c]
            counts[c] = counts[c] + ClassScores(len(cm.tp_pairs), len(cm.fp), len(cm.fn))
    return DetectionReport(counts)


@dataclass(frozen=True)
class DepthRecord:
    pred_m: float
    gt_m: float
    cls: str


@dataclass(frozen=True)
class DepthReport:
    overall_mae: float | None
    per_class_mae: dict[str, float | None]
    bucket_edges: tuple[float, ...]
    per_bucket_mae: tuple[float | None, ...]
    per_bucket_median: tuple[float | None, ...]
    per_bucket_count: tuple[int, ...]
    n_valid: int
    per_class_count: dict[str, int] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.n_valid == 0

    def to_dict(self) -> dict:
        return {
            "overall_mae": self.overall_mae,
            "per_class_mae": dict(self.per_class_mae),
            "bucket_edges": list(self.bucket_edges),
            "per_bucket_mae": list(self.per_bucket_mae),
            "per_bucket_median": list(self.per_bucket_median),
            "per_bucket_count": list(self.per_bucket_count),
            "per_class_count": dict(self.per_class_count),
            "n_valid": self.n_valid,
            "empty": self.empty,
        }


def _mean(x):
    return float(np.mean(x)) if len(x) else None


def depth_mae(records: Sequence[DepthRecord], bucket_edges: Sequence[float] = DEFAULT_BUCKET_EDGES) -> DepthReport:
    """Absolute depth error over records with positive ground truth.

    Buckets are half-open on ground-truth depth. With no valid record every
    statistic is ``None`` and ``empty`` is true.
    """
    edges = tuple(float(e) for e in bucket_edges)
    valid = [r for r in records if r.gt_m > 0]
    err = np.array([abs(r.pred_m - r.gt_m) for r in valid], dtype=np.float64)
    gt = np.array([r.gt_m for r in valid], dtype=np.float64)
    per_class = {c: _mean(err[[r.cls == c for r in valid]]) if valid else None for c in CLASSES}
    class_count = {c: sum(1 for r in valid if r.cls == c) for c in CLASSES}
    maes, medians, counts = [], [], []
    for lo, hi in zip(edges, edges[1:]):
        sel = err[(gt >= lo) & (gt < hi)] if valid else err
        maes.append(_mean(sel))
        medians.append(float(np.median(sel)) if len(sel) else None)
        counts.append(int(len(sel)))
    return DepthReport(_mean(err), per_class, edges, tuple(maes), tuple(medians), tuple(counts), len(valid),
                       class_count)


@dataclass(frozen=True)
class Attribution:
    total_mae: float | None
    oracle_mae: float | None
    localization_contribution: float | None
    n_total: int = 0
    n_oracle: int = 0
    n_failed_total: int = 0
    n_failed_oracle: int = 0

    @property
    def defined(self) -> bool:
        return self.localization_contribution is not None

    def to_dict(self) -> dict:
        return {
            "total_mae": self.total_mae,
            "oracle_mae": self.oracle_mae,
            "localization_contribution": self.localization_contribution,
            "n_total": self.n_total,
            "n_oracle": self.n_oracle,
            "n_failed_total": self.n_failed_total,
            "n_failed_oracle": self.n_failed_oracle,
        }


class DepthPairing(NamedTuple):
    records: list[DepthRecord]
    n_failed: int
    n_unpaired: int
    n_no_correspondence: int


def depth_records_from_matches(
    detections: Sequence[Detection],
    results: Sequence,
    gts: Sequence[GroundTruthPoint],
    rule: MatchRule = MatchRule(),
) -> DepthPairing:
    """Pair each successful depth estimate with the ground truth it localizes.

    Pairing is class-agnostic so a misclassified but well-placed detection
    still yields a depth error; detections under the confidence threshold
    are ignored like everywhere else. Estimates landing on a ground truth with no
    right-view correspondence are excluded and counted, as are estimates
    matching no ground truth at all.
    """
    ok = [i for i, r in enumerate(results) if getattr(r, "depth_m", None) is not None]
    sub = [detections[i] for i in ok]
    matches = match_detections(sub, gts, rule, class_aware=False)
    records, no_corr, paired = [], 0, 0
    for c in CLASSES:
        for i, j in matches[c].tp_pairs:
            paired += 1
            g = gts[j]
            if not g.stereo_valid:
                no_corr += 1
                continue
            records.append(DepthRecord(results[ok[i]].depth_m, g.depth_m, g.cls))
    records.sort(key=lambda r: (r.gt_m, r.pred_m))
    return DepthPairing(records, len(results) - len(ok), len(ok) - paired, no_corr)


def attribute_localization_error(sample, detector_preds, oracle_pts, rig, cfg,
                                 rule: MatchRule = MatchRule()) -> Attribution:
    """Depth MAE with detector points minus MAE with ground-truth points.

    Positive means localization adds error. Both runs go through the same
    matcher; failed matches are excluded and counted.
    """
    gts = ground_truth_points(sample.annotations)
    if not detector_preds or not oracle_pts:
        return Attribution(None, None, None)
    det_out = estimate_depths(sample, detector_preds, rig, cfg)
    orc_out = estimate_depths(sample, oracle_pts, rig, cfg)
    det_rec, det_failed, _, _ = depth_records_from_matches(
        [d for d, _ in det_out], [r for _, r in det_out], gts, rule)
    orc_rec, orc_failed, _, _ = depth_records_from_matches(
        [d for d, _ in orc_out], [r for _, r in orc_out], gts, rule)
    total = depth_mae(det_rec).overall_mae
    oracle = depth_mae(orc_rec).overall_mae
    contribution = None if total is None or oracle is None else total - oracle
    return Attribution(total, oracle, contribution, len(det_rec), len(orc_rec), det_failed, orc_failed)


def ground_truth_points(annotations, tau: float = 2.0, require_right: bool = False) -> list[GroundTruthPoint]:
    """Left-view ground truth for every annotation visible in the left image."""
    return [
        GroundTruthPoint(a.left_px, classify_by_depth(a.depth_m, tau), a.depth_m, a.visible_right)
        for a in annotations
        if a.visible_left and (a.visible_right or not require_right)
    ]


def oracle_detections(annotations, tau: float = 2.0, require_right: bool = False) -> list[Detection]:
    """Detections synthesized from ground truth, confidence 1."""
    return [Detection(g.position, g.cls, 1.0)
            for g in ground_truth_points(annotations, tau, require_right)]


def bbox_from_point(center: PixelPoint, depth_m: float) -> tuple[PixelPoint, float]:
    """Square box of side ``60 / depth`` pixels around ``center``."""
    if not depth_m > 0:
        raise DomainError(f"depth must be positive, got {depth_m}")
    return PixelPoint(float(center[0]), float(center[1])), 60.0 / depth_m


def detection_csv(report: DetectionReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "precision", "recall", "f_score", "tp", "fp", "fn"])
    rows = list(report.per_class.items()) + [("overall", report.overall)]
    for name, s in rows:
        w.writerow([name, f"{s.precision:.6f}", f"{s.recall:.6f}", f"{s.f_score:.6f}", s.tp, s.fp, s.fn])
    return buf.getvalue()


def depth_csv(report: DepthReport, subset: str = "test") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subset", "category", "l1_error", "count"])

    def fmt(x):
        return "" if x is None else f"{x:.6f}"

    for c in CLASSES:
        w.writerow([subset, c, fmt(report.per_class_mae[c]), report.per_class_count.get(c, 0)])
    w.writerow([subset, "overall", fmt(report.overall_mae), report.n_valid])
    edges = report.bucket_edges
    for k, (lo, hi) in enumerate(zip(edges, edges[1:])):
        w.writerow([subset, f"[{lo:g},{hi:g})", fmt(report.per_bucket_mae[k]), report.per_bucket_count[k]])
    return buf.getvalue()


def report_json(**sections) -> str:
    return json.dumps({k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in sections.items()},
                      indent=1, sort_keys=True)
