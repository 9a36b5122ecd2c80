from __future__ import annotations

import pytest

from rosestereo.geometry import CameraIntrinsics, StereoRig, dataset_rig


@pytest.fixture
def rig() -> StereoRig:
    return dataset_rig()


@pytest.fixture
def example_rig() -> StereoRig:
    """f_px=1000, principal point (320, 240), 65 mm baseline."""
    k = CameraIntrinsics(26.0, 0.325, (640, 480), (320.0, 240.0), focal_px_override=1000.0)
    return StereoRig(k, 0.065)


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, passed, detail)``."""
    lines = request.config.stash.setdefault(_CRITERIA, {})

    def record(n: int, passed: bool, detail: str) -> None:
        lines[n] = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
