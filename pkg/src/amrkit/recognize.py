"""Counter-recognition decoders and the two-stage detection+reading pipeline.

Three decoders share the :class:`ReadingResult` contract:

- grid decode (box assembly): digits are detected like objects, suppressed
  with NMS, then read off left-to-right;
- multi-head argmax: five independent 10-way heads, one per position;
- CTC greedy: per-frame argmax over 10 digits + blank, collapse repeats,
  drop blanks, so the reading length is variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import raster
from .dataset import Box
from .detect import DecodedBox, GridSpec, decode_grid, expand_margin, nms, select_counter
from .errors import NonDistribution, ShapeMismatch
from .tensorio import (
    ROLE_CRNET,
    ROLE_CRNN,
    ROLE_DETECTOR,
    ROLE_MULTITASK,
    InferenceProvider,
    InferenceRequest,
    PredictionTensor,
)

STATUS_ACCEPTED = "accepted"
STATUS_REJECTED_TOO_FEW = "rejected_too_few"
STATUS_NEGATIVE_NO_COUNTER = "negative_no_counter"

MODE_FIXED5 = "fixed5"
MODE_VARIABLE = "variable"

CTC_CLASSES = 11  # ten digits plus the trailing blank label
CTC_BLANK = 10

RECOGNIZERS = ("crnet", "multitask", "crnn")


@dataclass(frozen=True)
class ReadingResult:
    """Decoded counter string with per-digit confidences and an accept status."""

    reading: str
    digit_confidences: tuple[float, ...]
    status: str

    def __post_init__(self):
        if self.status not in (STATUS_ACCEPTED, STATUS_REJECTED_TOO_FEW, STATUS_NEGATIVE_NO_COUNTER):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == STATUS_ACCEPTED and len(self.digit_confidences) != len(self.reading):
            raise ValueError("accepted results need one confidence per digit")


_REJECTED = ReadingResult("", (), STATUS_REJECTED_TOO_FEW)
_NEGATIVE = ReadingResult("", (), STATUS_NEGATIVE_NO_COUNTER)


@dataclass(frozen=True, eq=False)
class CtcFrameMatrix:
    """T x 11 per-frame label distributions; label 10 is the blank."""

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != CTC_CLASSES or frames.shape[0] < 1:
            raise ShapeMismatch(f"frames must be (T, {CTC_CLASSES}) with T >= 1, got {frames.shape}")
        if not np.all(np.isfinite(frames)) or np.any(frames < 0):
            raise NonDistribution("frame scores must be finite and non-negative")
        sums = frames.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise NonDistribution("each frame row must sum to 1 within 1e-6")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_scores(cls, scores: np.ndarray) -> "CtcFrameMatrix":
        """Softmax-normalize raw per-frame scores into a frame matrix."""
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[1] != CTC_CLASSES:
            raise ShapeMismatch(f"scores must be (T, {CTC_CLASSES}), got {scores.shape}")
        shifted = scores - scores.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return cls(e / e.sum(axis=1, keepdims=True))


def _reading_from_boxes(boxes: Sequence[DecodedBox]) -> ReadingResult:
    ordered = sorted(boxes, key=lambda d: (d.box.cx, d.box.cy, d.class_id))
    reading = "".join(str(d.class_id) for d in ordered)
    return ReadingResult(reading, tuple(d.confidence for d in ordered), STATUS_ACCEPTED)


def decode_crnet(
    t: PredictionTensor,
    spec: GridSpec,
    mode: str = MODE_FIXED5,
    threshold: float = 0.5,
    nms_iou_threshold: float = 0.5,
) -> ReadingResult:
    """Assemble a reading from a digit-detection grid.

    Candidates above ``threshold`` are suppressed per class with NMS.  In
    fixed5 mode the five most confident survivors form the reading and fewer
    than five rejects the counter; in variable mode every survivor is kept,
    so counters with 4-7 digits decode naturally.  Digits are ordered by box
    x-center.
    """
    if spec.num_classes != 10:
        raise ShapeMismatch(f"digit grid must have 10 classes, got {spec.num_classes}")
    if mode not in (MODE_FIXED5, MODE_VARIABLE):
        raise ValueError(f"unknown mode {mode!r}")
    kept = nms(decode_grid(t, spec, threshold), nms_iou_threshold)
    if mode == MODE_FIXED5:
        if len(kept) < 5:
            return _REJECTED
        kept = kept[:5]
    return _reading_from_boxes(kept)


def decode_multitask(outputs: np.ndarray) -> ReadingResult:
    """Per-position argmax over five independent 10-way score vectors.

    The reading is always five digits.  Rows that already form probability
    distributions (non-negative, summing to 1) are used as-is for the
    confidences; raw logits are softmax-normalized first.  Ties resolve to
    the lowest class index.
    """
    arr = np.asarray(outputs, dtype=np.float64)
    if arr.shape != (5, 10):
        raise ShapeMismatch(f"expected (5, 10) outputs, got {arr.shape}")
    if np.all(arr >= 0) and np.all(np.abs(arr.sum(axis=1) - 1.0) <= 1e-6):
        probs = arr
    else:
        shifted = arr - arr.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
    ids = probs.argmax(axis=1)
    reading = "".join(str(int(i)) for i in ids)
    confidences = tuple(float(probs[p, i]) for p, i in enumerate(ids))
    return ReadingResult(reading, confidences, STATUS_ACCEPTED)


def decode_ctc_greedy(m: CtcFrameMatrix) -> ReadingResult:
    """Greedy CTC decode: argmax per frame, collapse repeats, drop blanks.

    Each emitted digit's confidence is the maximum frame probability inside
    its collapsed run.  An all-blank input yields the empty reading.
    """
    labels = m.frames.argmax(axis=1)
    probs = m.frames[np.arange(m.frames.shape[0]), labels]
    digits: list[str] = []
    confidences: list[float] = []
    prev = -1
    run_conf = 0.0
    for label, prob in zip(labels, probs):
        if label == prev:
            if label != CTC_BLANK:
                run_conf = max(run_conf, float(prob))
                confidences[-1] = run_conf
            continue
        if label != CTC_BLANK:
            digits.append(str(int(label)))
            run_conf = float(prob)
            confidences.append(run_conf)
        prev = int(label)
    return ReadingResult("".join(digits), tuple(confidences), STATUS_ACCEPTED)


@dataclass(frozen=True, eq=False)
class PipelineImage:
    """An image to run the pipeline on; pixels are optional (providers that
    work from dumps or ground truth need only the geometry)."""

    image_id: str
    width: int
    height: int
    pixels: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class PipelineTrace:
    """Everything one pipeline run produced, ready for trace output."""

    image_id: str
    result: ReadingResult
    counter_box: Box | None = None
    margin_box: Box | None = None
    counter_confidence: float | None = None

    def to_record(self) -> dict:
        return {
            "image_id": self.image_id,
            "counter_box": list(self.counter_box.as_tuple()) if self.counter_box else None,
            "margin_box": list(self.margin_box.as_tuple()) if self.margin_box else None,
            "counter_confidence": self.counter_confidence,
            "reading": self.result.reading,
            "status": self.result.status,
            "confidences": list(self.result.digit_confidences),
        }


def _scale_box(b: Box, from_w: float, from_h: float, to_w: float, to_h: float) -> Box:
    sx = to_w / from_w
    sy = to_h / from_h
    return Box(b.x * sx, b.y * sy, b.w * sx, b.h * sy)


def run_pipeline(image: PipelineImage, provider: InferenceProvider, recognizer: str, config) -> PipelineTrace:
    """Detect the counter, expand the margin, and decode the reading.

    ``config`` is a :class:`amrkit.config.PipelineConfig`.  No detection at
    all produces a negative result; recognizer failures (too few digits in
    fixed5 mode) surface through the result status.
    """
    if recognizer not in RECOGNIZERS:
        raise ValueError(f"unknown recognizer {recognizer!r}")
    det_spec = config.detector_spec
    det_request = InferenceRequest(
        image_id=image.image_id,
        role=ROLE_DETECTOR,
        image_w=image.width,
        image_h=image.height,
        target_w=det_spec.input_w,
        target_h=det_spec.input_h,
        crop=None,
        pixels=_resized_pixels(image.pixels, None, det_spec.input_h, det_spec.input_w),
    )
    candidates = decode_grid(provider.infer(det_request), det_spec, config.detector_threshold)
    best = select_counter(candidates)
    if best is None:
        return PipelineTrace(image.image_id, _NEGATIVE)

    counter_box = _scale_box(best.box, det_spec.input_w, det_spec.input_h, image.width, image.height)
    margin_box = expand_margin(counter_box, config.margin, image.width, image.height)

    role, target_w, target_h = _recognizer_io(recognizer, config)
    rec_request = InferenceRequest(
        image_id=image.image_id,
        role=role,
        image_w=image.width,
        image_h=image.height,
        target_w=target_w,
        target_h=target_h,
        crop=margin_box,
        pixels=_resized_pixels(image.pixels, margin_box, target_h, target_w),
    )
    tensor = provider.infer(rec_request)
    if recognizer == "crnet":
        result = decode_crnet(
            tensor,
            config.crnet_spec,
            mode=config.recognizer_mode,
            threshold=config.recognizer_threshold,
            nms_iou_threshold=config.nms_iou_threshold,
        )
    elif recognizer == "multitask":
        result = decode_multitask(tensor.as_array())
    else:
        result = decode_ctc_greedy(CtcFrameMatrix.from_scores(tensor.as_array()))
    return PipelineTrace(
        image_id=image.image_id,
        result=result,
        counter_box=counter_box,
        margin_box=margin_box,
        counter_confidence=best.confidence,
    )


def _recognizer_io(recognizer: str, config) -> tuple[str, int, int]:
    if recognizer == "crnet":
        return ROLE_CRNET, config.crnet_spec.input_w, config.crnet_spec.input_h
    if recognizer == "multitask":
        return ROLE_MULTITASK, config.multitask_input[0], config.multitask_input[1]
    return ROLE_CRNN, config.crnn_input[0], config.crnn_input[1]


def _resized_pixels(pixels: np.ndarray | None, crop: Box | None, out_h: int, out_w: int):
    if pixels is None:
        return None
    if crop is None:
        return raster.resize_bilinear(pixels, out_h, out_w)
    return raster.crop_resize(pixels, crop, out_h, out_w)
