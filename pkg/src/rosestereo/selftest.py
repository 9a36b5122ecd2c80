"""Built-in numeric self-checks run by ``rosestereo selftest``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses
from .errors import DegenerateMatchError
from .geometry import PixelPoint, Point3, backproject, dataset_rig, disparity_of_depth, project, triangulate_depth
from .heatmap import SigmaLaw, decode_heatmaps, encode_heatmaps
from .scenegen.render import FlowerAnnotation
from .stereomatch import naive_strip_scores, nccoef_score, nccorr_score, strip_scores


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _grad_suite(rng, perturb: float) -> tuple[bool, str]:
    """Analytic gradients against central differences at random points."""
    worst = 0.0
    cases: list[tuple[Callable, Callable, float]] = []
    for x in rng.uniform(-5, 15, 100):
        cases.append((losses.custom_sigmoid, losses.custom_sigmoid_grad, x))
    for y in rng.uniform(0.05, 0.95, 100):
        cases.append((losses.inverse_custom_sigmoid, losses.inverse_custom_sigmoid_grad, y))
    xs = rng.uniform(-4, 4, 400)
    xs = xs[np.abs(np.abs(xs) - 1.0) > 1e-3][:100]
    for x in xs:
        cases.append((lambda t: losses.smoothed_l1(t)[0], lambda t: losses.smoothed_l1(t)[1], x))
    w = losses.ClassWeights()
    for p in rng.uniform(0.05, 0.95, 100):
        def f(t):
            q = (1 - t) / 2
            return losses.cce_loss([q, t, q], "near", w)[0]

        def g(t):
            q = (1 - t) / 2
            return losses.cce_loss([q, t, q], "near", w)[1][1]
        cases.append((f, g, p))
    for f, g, x0 in cases:
        worst = max(worst, losses.finite_diff_check(f, lambda t, g=g: g(t) + perturb, float(x0), 1e-5))
    return worst < 1e-5, f"{len(cases)} points, worst rel err {worst:.2e}"


def _sigmoid_identity(rng) -> tuple[bool, str]:
    x = np.linspace(-5, 15, 2001)
    err = float(np.max(np.abs(losses.inverse_custom_sigmoid(losses.custom_sigmoid(x)) - x)))
    return err <= 1e-9, f"max |inv(sig(x)) - x| = {err:.2e}"


def _loss_values(rng) -> tuple[bool, str]:
    loss, _ = losses.cce_loss([0.25, 0.5, 0.25], "near", losses.ClassWeights(w_near=1.0))
    ok = abs(loss - 0.6931471806) <= 1e-9
    ok &= losses.smoothed_l1(1.0) == (0.5, 1.0) and losses.smoothed_l1(-3.0) == (2.5, -1.0)
    return ok, f"cce(-ln .5)={loss:.10f}, smoothed_l1(1)={losses.smoothed_l1(1.0)[0]}"


def _geometry(rng) -> tuple[bool, str]:
    rig = dataset_rig()
    z = rng.uniform(0.1, 100, 1000)
    rel = max(abs(triangulate_depth(rig, disparity_of_depth(rig, zi)) - zi) / zi for zi in z)
    px = 0.0
    for u, v, d in zip(rng.uniform(0, 640, 200), rng.uniform(0, 480, 200), rng.uniform(0.2, 50, 200)):
        q = project(rig, backproject(rig, PixelPoint(u, v), d), "left")
        px = max(px, abs(q.u - u), abs(q.v - v))
    return rel <= 1e-9 and px <= 1e-9, f"depth rel err {rel:.1e}, reprojection {px:.1e}px"


def _ncc(rng) -> tuple[bool, str]:
    t = rng.uniform(0, 255, (16, 16))
    w = rng.uniform(0, 255, (16, 16))
    d1 = abs(nccorr_score(t, 3.7 * w) - nccorr_score(t, w))
    d2 = abs(nccoef_score(t, 2.0 * w + 10.0) - nccoef_score(t, w))
    degenerate = False
    try:
        nccoef_score(np.full((16, 16), 7.0), w)
    except DegenerateMatchError:
        degenerate = True
    worst = 0.0
    for _ in range(50):
        tt = rng.uniform(0, 255, (8, 8))
        ss = rng.uniform(0, 255, (10, 40))
        for m in ("nccorr", "nccoef"):
            worst = max(worst, float(np.nanmax(np.abs(strip_scores(tt, ss, m) - naive_strip_scores(tt, ss, m)))))
    ok = d1 <= 1e-9 and d2 <= 1e-6 and degenerate and worst <= 1e-9
    return ok, f"gain {d1:.1e}, affine {d2:.1e}, fast-vs-naive {worst:.1e}"


def _heatmap(rng) -> tuple[bool, str]:
    law = SigmaLaw()
    anns = []
    for k, (u, v, z) in enumerate([(100.5, 100.2, 1.0), (300.0, 200.7, 3.0), (500.2, 400.0, 5.0)]):
        p = PixelPoint(u, v)
        anns.append(FlowerAnnotation(k, Point3(0, 0, z), p, p, z, 10.0, True, True))
    dets = decode_heatmaps(encode_heatmaps(anns, (640, 480), 2.0, law), 0.51)
    ok = len(dets) == 3 and all(
        min(max(abs(d.u - a.left_px.u), abs(d.v - a.left_px.v)) for d in dets) <= 1.0 for a in anns)
    return ok, f"{len(dets)} of {len(anns)} centers recovered"


def run_selftest(perturb_gradient: float = 0.0, seed: int = 0) -> list[SuiteResult]:
    """Run every suite; ``perturb_gradient`` offsets analytic gradients (negative control)."""
    rng = np.random.default_rng(seed)
    suites = [
        ("losses.gradients", lambda: _grad_suite(rng, perturb_gradient)),
        ("losses.sigmoid_inverse", lambda: _sigmoid_identity(rng)),
        ("losses.values", lambda: _loss_values(rng)),
        ("geometry.roundtrip", lambda: _geometry(rng)),
        ("stereomatch.ncc", lambda: _ncc(rng)),
        ("heatmap.roundtrip", lambda: _heatmap(rng)),
    ]
    out = []
    for name, fn in suites:
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashing suite is a failing suite
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(SuiteResult(name, bool(passed), detail))
    return out


def format_table(results: list[SuiteResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'suite'.ljust(width)}  result  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL':6}  {r.detail}")
    return "\n".join(lines)
