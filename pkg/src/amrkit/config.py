"""Pipeline configuration: defaults, JSON schema, validation.

Defaults mirror the reference operating point: 416x416 detector input on a
13x13 grid with 5 anchors and one class, digit grid 50x13 at 400x106 input
with 10 classes, 20% margin, 0.5 recognition confidence threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

from .detect import Anchor, GridSpec, load_anchors, validate_input_stride
from .recognize import MODE_FIXED5, MODE_VARIABLE, RECOGNIZERS

# Counters are wide and flat (aspect ~3.8); digits are tall (~0.57).
DEFAULT_DETECTOR_ANCHORS = (
    Anchor(1.1, 0.3),
    Anchor(2.3, 0.6),
    Anchor(3.8, 1.0),
    Anchor(5.7, 1.5),
    Anchor(8.5, 2.2),
)
DEFAULT_CRNET_ANCHORS = (
    Anchor(2.0, 4.5),
    Anchor(3.0, 6.5),
    Anchor(4.0, 8.0),
    Anchor(5.0, 9.5),
    Anchor(6.5, 11.0),
)

DEFAULT_DETECTOR_SPEC = GridSpec(
    grid_w=13, grid_h=13, anchors=DEFAULT_DETECTOR_ANCHORS,
    num_classes=1, input_w=416, input_h=416,
)
DEFAULT_CRNET_SPEC = GridSpec(
    grid_w=50, grid_h=13, anchors=DEFAULT_CRNET_ANCHORS,
    num_classes=10, input_w=400, input_h=106,
)


@dataclass(frozen=True)
class PipelineConfig:
    """Full parameter set for one batch run; every field has a sane default."""

    detector_spec: GridSpec = DEFAULT_DETECTOR_SPEC
    detector_threshold: float = 0.25
    nms_iou_threshold: float = 0.5
    margin: float = 0.2
    recognizer: str = "crnet"
    recognizer_mode: str = MODE_FIXED5
    recognizer_threshold: float = 0.5
    crnet_spec: GridSpec = DEFAULT_CRNET_SPEC
    multitask_input: tuple[int, int] = (220, 60)  # (w, h)
    crnn_input: tuple[int, int] = (160, 40)
    crnn_frames: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.recognizer not in RECOGNIZERS:
            raise ValueError(f"recognizer must be one of {RECOGNIZERS}, got {self.recognizer!r}")
        if self.recognizer_mode not in (MODE_FIXED5, MODE_VARIABLE):
            raise ValueError(f"unknown recognizer mode {self.recognizer_mode!r}")
        for name, v in (
            ("detector_threshold", self.detector_threshold),
            ("recognizer_threshold", self.recognizer_threshold),
        ):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 < self.nms_iou_threshold <= 1.0:
            raise ValueError("nms_iou_threshold must be in (0, 1]")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.crnn_frames < 1:
            raise ValueError("crnn_frames must be >= 1")
        # the detector backbone downsamples by 32; recognizer grids have
        # their own strides, so the check applies to the detector input only
        validate_input_stride(self.detector_spec.input_w, self.detector_spec.input_h)


def _spec_to_dict(spec: GridSpec) -> dict:
    return {
        "grid_w": spec.grid_w,
        "grid_h": spec.grid_h,
        "num_classes": spec.num_classes,
        "input_w": spec.input_w,
        "input_h": spec.input_h,
        "anchors": [[a.pw, a.ph] for a in spec.anchors],
    }


def _spec_from_dict(d: Mapping, default: GridSpec) -> GridSpec:
    anchors = d.get("anchors")
    if isinstance(anchors, str):
        anchors = load_anchors(anchors)
    elif anchors is not None:
        anchors = tuple(Anchor(float(w), float(h)) for w, h in anchors)
    else:
        anchors = default.anchors
    return GridSpec(
        grid_w=int(d.get("grid_w", default.grid_w)),
        grid_h=int(d.get("grid_h", default.grid_h)),
        anchors=anchors,
        num_classes=int(d.get("num_classes", default.num_classes)),
        input_w=int(d.get("input_w", default.input_w)),
        input_h=int(d.get("input_h", default.input_h)),
    )


def config_to_dict(config: PipelineConfig) -> dict:
    return {
        "detector": _spec_to_dict(config.detector_spec),
        "detector_threshold": config.detector_threshold,
        "nms_iou_threshold": config.nms_iou_threshold,
        "margin": config.margin,
        "recognizer": config.recognizer,
        "recognizer_mode": config.recognizer_mode,
        "recognizer_threshold": config.recognizer_threshold,
        "crnet": _spec_to_dict(config.crnet_spec),
        "multitask_input": list(config.multitask_input),
        "crnn_input": list(config.crnn_input),
        "crnn_frames": config.crnn_frames,
        "seed": config.seed,
    }


def config_from_dict(d: Mapping) -> PipelineConfig:
    base = PipelineConfig()
    return PipelineConfig(
        detector_spec=_spec_from_dict(d.get("detector", {}), base.detector_spec),
        detector_threshold=float(d.get("detector_threshold", base.detector_threshold)),
        nms_iou_threshold=float(d.get("nms_iou_threshold", base.nms_iou_threshold)),
        margin=float(d.get("margin", base.margin)),
        recognizer=str(d.get("recognizer", base.recognizer)),
        recognizer_mode=str(d.get("recognizer_mode", base.recognizer_mode)),
        recognizer_threshold=float(d.get("recognizer_threshold", base.recognizer_threshold)),
        crnet_spec=_spec_from_dict(d.get("crnet", {}), base.crnet_spec),
        multitask_input=tuple(d.get("multitask_input", base.multitask_input)),
        crnn_input=tuple(d.get("crnn_input", base.crnn_input)),
        crnn_frames=int(d.get("crnn_frames", base.crnn_frames)),
        seed=int(d.get("seed", base.seed)),
    )


def load_config(path: str | Path) -> PipelineConfig:
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2) + "\n", encoding="utf-8")


def with_overrides(config: PipelineConfig, **kwargs) -> PipelineConfig:
    """Functional update that re-runs validation."""
    return replace(config, **kwargs)
