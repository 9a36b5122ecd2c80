"""Run configuration as a flat mapping of dotted keys.

A config file is a JSON object such as ``{"scene.n_bushes": 6, "match.method":
"nccorr"}``. Keys mirror the fields of the objects they build; command-line
flags are applied on top of file values.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .detect import DetectorParams
from .errors import DomainError
from .evaluation import MatchRule
from .geometry import StereoRig
from .scenegen.augment import AugmentSpec
from .scenegen.render import SceneSpec
from .stereomatch import MatchConfig

DEFAULTS: dict = {
    "rig.focal_length_mm": 26.0,
    "rig.pixel_pitch_mm": 0.325,
    "rig.focal_px_override": 1000.0,
    "rig.cx": None,
    "rig.cy": None,
    "rig.width": 640,
    "rig.height": 480,
    "rig.baseline_m": 0.065,
    "augment.enabled": False,
    "detector": "oracle",
    "seed": None,
    "count": 100,
    "jobs": 1,
    "split": "test",
    "tau": 2.0,
    "split.ratios": [0.7, 0.15, 0.15],
}


def _section_defaults(prefix: str, obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        out[f"{prefix}.{f.name}"] = list(value) if isinstance(value, tuple) else value
    return out


DEFAULTS.update({k: v for k, v in _section_defaults("scene", SceneSpec()).items() if k != "scene.seed"})
DEFAULTS.update(_section_defaults("match", MatchConfig()))
DEFAULTS.update(_section_defaults("rule", MatchRule()))
DEFAULTS.update({k: v for k, v in _section_defaults("augment", AugmentSpec()).items() if k != "augment.seed"})
DEFAULTS.update(_section_defaults("detect", DetectorParams()))


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: invalid JSON at byte {exc.pos}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise DomainError(f"{path}: config must be a JSON object")
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise DomainError(f"{path}: unknown config keys: {', '.join(unknown)}")
        cfg.update(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    return cfg


def _section(cfg: dict, prefix: str) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in cfg.items() if k.startswith(prefix + ".")}


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def build_rig(cfg: dict) -> StereoRig:
    return StereoRig.from_dict(_section(cfg, "rig"))


def build_scene_spec(cfg: dict, seed: int) -> SceneSpec:
    return SceneSpec(seed=seed, **_tuples(_section(cfg, "scene")))


def build_match_config(cfg: dict) -> MatchConfig:
    return MatchConfig(**_section(cfg, "match"))


def build_rule(cfg: dict) -> MatchRule:
    return MatchRule(**_section(cfg, "rule"))


def build_detector_params(cfg: dict) -> DetectorParams:
    return DetectorParams(**_tuples(_section(cfg, "detect")))


def build_augment(cfg: dict, seed: int) -> AugmentSpec | None:
    sec = _section(cfg, "augment")
    if not sec.pop("enabled", False):
        return None
    return AugmentSpec.from_dict({**sec, "seed": seed})
