"""Ground-truth-backed inference provider for weight-free pipeline runs.

The oracle synthesizes network-output tensors by inverting the decode
transform: the grid cell and anchor holding a box center receive offsets,
log-scales and logits that decode back to that box at a configurable
confidence, while every other slot is pushed to sigmoid(-20) (about 2e-9,
comfortably below any threshold).  Composing the oracle with the real
decoders reproduces the ground truth exactly at zero noise, which stands in
for trained weights at desk scale.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .config import PipelineConfig
from .dataset import Box, MeterAnnotation
from .detect import GridSpec, iou_wh
from .errors import ShapeMismatch
from .recognize import CTC_BLANK, CTC_CLASSES
from .tensorio import (
    ROLE_CRNET,
    ROLE_CRNN,
    ROLE_DETECTOR,
    ROLE_MULTITASK,
    InferenceRequest,
    PredictionTensor,
)

OFF_LOGIT = -20.0
ON_LOGIT = 20.0
_OFFSET_EPS = 1e-6


@dataclass(frozen=True)
class OracleNoise:
    """Controlled imperfection for the synthesized tensors.

    ``box_jitter`` perturbs the detector's counter box by up to that fraction
    of the box size (position and scale); recognizer digit boxes stay exact
    so the decoded reading always matches the ground truth.
    ``confidence_floor`` is the guaranteed lower bound on every decoded
    confidence.
    """

    box_jitter: float = 0.0
    confidence_floor: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.box_jitter <= 0.2:
            raise ValueError("box_jitter must be in [0, 0.2]")
        if not 0.5 < self.confidence_floor <= 1.0:
            raise ValueError("confidence_floor must be in (0.5, 1]")


def _logit(p: float) -> float:
    p = min(max(p, 1e-12), 1.0 - 1e-12)
    return math.log(p / (1.0 - p))


def _rng_for(seed: int, image_id: str, role: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{image_id}:{role}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _jitter_box(box: Box, fraction: float, rng: np.random.Generator) -> Box:
    if fraction == 0.0:
        return box
    dx = float(rng.uniform(-fraction, fraction)) * box.w
    dy = float(rng.uniform(-fraction, fraction)) * box.h
    sw = 1.0 + float(rng.uniform(-fraction, fraction))
    sh = 1.0 + float(rng.uniform(-fraction, fraction))
    w, h = box.w * sw, box.h * sh
    return Box(box.cx + dx - w / 2, box.cy + dy - h / 2, w, h)


class OracleProvider:
    """InferenceProvider that derives every tensor from annotations."""

    def __init__(
        self,
        annotations: Iterable[MeterAnnotation],
        noise: OracleNoise = OracleNoise(),
        config: PipelineConfig | None = None,
    ):
        self._by_id: dict[str, MeterAnnotation] = {}
        for ann in annotations:
            if ann.image_id in self._by_id:
                raise ValueError(f"duplicate annotation for image {ann.image_id!r}")
            self._by_id[ann.image_id] = ann
        self.noise = noise
        self.config = config or PipelineConfig()

    # confidence placed midway between the floor and 1 so float32 storage
    # cannot drop a decoded value below the floor
    @property
    def _target_confidence(self) -> float:
        return min(1.0 - 1e-6, (self.noise.confidence_floor + 1.0) / 2)

    def output_shape(self, role: str) -> tuple[int, ...]:
        if role == ROLE_DETECTOR:
            return self.config.detector_spec.tensor_dims
        if role == ROLE_CRNET:
            return self.config.crnet_spec.tensor_dims
        if role == ROLE_MULTITASK:
            return (5, 10)
        if role == ROLE_CRNN:
            return (self.config.crnn_frames, CTC_CLASSES)
        raise ShapeMismatch(f"unknown role {role!r}")

    def infer(self, request: InferenceRequest) -> PredictionTensor:
        try:
            ann = self._by_id[request.image_id]
        except KeyError:
            raise KeyError(f"oracle has no annotation for image {request.image_id!r}") from None
        if request.role == ROLE_DETECTOR:
            return self._detector_tensor(request, ann)
        if request.role == ROLE_CRNET:
            return self._grid_tensor(request, ann, self.config.crnet_spec)
        if request.role == ROLE_MULTITASK:
            return self._multitask_tensor(ann)
        if request.role == ROLE_CRNN:
            return self._ctc_tensor(ann)
        raise ShapeMismatch(f"unknown role {request.role!r}")

    # --- grid heads ---------------------------------------------------------

    def _detector_tensor(self, request: InferenceRequest, ann: MeterAnnotation) -> PredictionTensor:
        spec = self.config.detector_spec
        rng = _rng_for(self.noise.seed, request.image_id, request.role)
        box = _jitter_box(ann.counter, self.noise.box_jitter, rng)
        scaled = _map_box(box, None, request.image_w, request.image_h, spec.input_w, spec.input_h)
        grid = _empty_grid(spec)
        _place_box(grid, spec, scaled, class_id=0, objectness=self._target_confidence)
        return _grid_to_tensor(grid, spec)

    def _grid_tensor(self, request: InferenceRequest, ann: MeterAnnotation, spec: GridSpec) -> PredictionTensor:
        grid = _empty_grid(spec)
        for pos, digit in enumerate(ann.digits):
            local = _map_box(digit, request.crop, request.image_w, request.image_h, spec.input_w, spec.input_h)
            # a digit whose center fell outside the crop is invisible to the
            # recognizer, exactly like a clipped detection
            if not (0 <= local.cx <= spec.input_w and 0 <= local.cy <= spec.input_h):
                continue
            _place_box(grid, spec, local, class_id=int(ann.reading[pos]), objectness=self._target_confidence)
        return _grid_to_tensor(grid, spec)

    # --- sequence heads -------------------------------------------------------

    def _multitask_tensor(self, ann: MeterAnnotation) -> PredictionTensor:
        out = np.full((5, 10), OFF_LOGIT, dtype=np.float64)
        target = self._target_confidence
        for pos, ch in enumerate(ann.reading):
            # choose the winning logit so the softmax probability lands on target
            out[pos, int(ch)] = _logit(target) + math.log(9.0) + OFF_LOGIT
        return PredictionTensor.from_array(out.astype(np.float32))

    def _ctc_tensor(self, ann: MeterAnnotation) -> PredictionTensor:
        frames = self.config.crnn_frames
        k = len(ann.reading)
        if frames < 2 * k - 1:
            raise ShapeMismatch(f"{frames} frames cannot host {k} digits with separating blanks")
        out = np.full((frames, CTC_CLASSES), OFF_LOGIT, dtype=np.float64)
        out[:, CTC_BLANK] = ON_LOGIT
        target = self._target_confidence
        on = _logit(target) + math.log(CTC_CLASSES - 1.0) + OFF_LOGIT
        if k == 1:
            positions = [frames // 2]
        else:
            positions = [round(i * (frames - 1) / (k - 1)) for i in range(k)]
        for ch, t in zip(ann.reading, positions):
            out[t, :] = OFF_LOGIT
            out[t, int(ch)] = on
        return PredictionTensor.from_array(out.astype(np.float32))


def _map_box(box: Box, crop: Box | None, image_w: float, image_h: float, target_w: int, target_h: int) -> Box:
    # source-image box -> coordinates of the (cropped) region resized to target
    if crop is None:
        ox, oy, rw, rh = 0.0, 0.0, image_w, image_h
    else:
        ox, oy, rw, rh = crop.x, crop.y, crop.w, crop.h
    sx = target_w / rw
    sy = target_h / rh
    return Box((box.x - ox) * sx, (box.y - oy) * sy, box.w * sx, box.h * sy)


def _empty_grid(spec: GridSpec) -> np.ndarray:
    grid = np.zeros((spec.grid_h, spec.grid_w, spec.num_anchors, spec.num_classes + 5), dtype=np.float64)
    grid[..., 4] = OFF_LOGIT
    grid[..., 5:] = OFF_LOGIT
    return grid


def _grid_to_tensor(grid: np.ndarray, spec: GridSpec) -> PredictionTensor:
    flat = grid.reshape(spec.grid_h, spec.grid_w, spec.channels).astype(np.float32)
    return PredictionTensor.from_array(flat)


def _place_box(grid: np.ndarray, spec: GridSpec, box: Box, class_id: int, objectness: float) -> None:
    """Invert the decode transform and write one box into its grid slot."""
    bx = box.cx / spec.input_w * spec.grid_w
    by = box.cy / spec.input_h * spec.grid_h
    bw = box.w / spec.input_w * spec.grid_w
    bh = box.h / spec.input_h * spec.grid_h
    cx = min(max(int(math.floor(bx)), 0), spec.grid_w - 1)
    cy = min(max(int(math.floor(by)), 0), spec.grid_h - 1)
    ox = min(max(bx - cx, _OFFSET_EPS), 1.0 - _OFFSET_EPS)
    oy = min(max(by - cy, _OFFSET_EPS), 1.0 - _OFFSET_EPS)

    ranked = sorted(
        range(spec.num_anchors),
        key=lambda i: -iou_wh(bw, bh, spec.anchors[i].pw, spec.anchors[i].ph),
    )
    slot = next((i for i in ranked if grid[cy, cx, i, 4] == OFF_LOGIT), None)
    if slot is None:
        raise ShapeMismatch(f"all {spec.num_anchors} anchor slots of cell ({cx}, {cy}) are occupied")
    anchor = spec.anchors[slot]
    entry = grid[cy, cx, slot]
    entry[0] = _logit(ox)
    entry[1] = _logit(oy)
    entry[2] = math.log(bw / anchor.pw)
    entry[3] = math.log(bh / anchor.ph)
    entry[4] = _logit(objectness)
    entry[5:] = OFF_LOGIT
    entry[5 + class_id] = ON_LOGIT


def synthesize_grid(
    spec: GridSpec, boxes: Iterable[tuple[Box, int, float]]
) -> PredictionTensor:
    """Tensor that decodes to exactly the given (box, class_id, confidence)
    triples; every other grid slot stays silent.  Boxes are in input-image
    pixel coordinates."""
    grid = _empty_grid(spec)
    for box, class_id, confidence in boxes:
        _place_box(grid, spec, box, class_id=class_id, objectness=confidence)
    return _grid_to_tensor(grid, spec)


def oracle_provider(
    annotations: Iterable[MeterAnnotation],
    noise: OracleNoise = OracleNoise(),
    config: PipelineConfig | None = None,
) -> OracleProvider:
    """Build a ground-truth-backed provider for the given annotations."""
    return OracleProvider(annotations, noise, config)
