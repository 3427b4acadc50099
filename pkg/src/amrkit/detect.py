"""Anchor estimation, grid decoding, NMS, counter selection, margin expansion.

The decode transform follows the YOLOv2 convention.  For cell (cx, cy),
anchor (pw, ph) and raw values (tx, ty, tw, th, to, class logits):

    bx = (sigmoid(tx) + cx) / grid_w * input_w
    by = (sigmoid(ty) + cy) / grid_h * input_h
    bw = pw * exp(tw) / grid_w * input_w
    bh = ph * exp(th) / grid_h * input_h
    confidence = sigmoid(to) * softmax(class logits)[argmax]

Anchors are expressed in grid-cell units.  Non-square grids are first-class:
grid_w and grid_h are independent everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Box
from .errors import InsufficientBoxes, ShapeMismatch
from .tensorio import PredictionTensor

KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class Anchor:
    """Prior box shape in grid-cell units."""

    pw: float
    ph: float

    def __post_init__(self):
        if not (self.pw > 0 and self.ph > 0 and math.isfinite(self.pw) and math.isfinite(self.ph)):
            raise ValueError(f"anchor sides must be positive finite, got ({self.pw}, {self.ph})")


@dataclass(frozen=True)
class GridSpec:
    """Output-grid geometry of one detection head."""

    grid_w: int
    grid_h: int
    anchors: tuple[Anchor, ...]
    num_classes: int
    input_w: int
    input_h: int

    def __post_init__(self):
        if self.grid_w < 1 or self.grid_h < 1:
            raise ValueError("grid dims must be positive")
        if self.num_classes < 1:
            raise ValueError("need at least one class")
        if not self.anchors:
            raise ValueError("need at least one anchor")
        if self.input_w < 1 or self.input_h < 1:
            raise ValueError("input dims must be positive")
        object.__setattr__(self, "anchors", tuple(self.anchors))

    @property
    def num_anchors(self) -> int:
        return len(self.anchors)

    @property
    def channels(self) -> int:
        return filter_count(self.num_classes, self.num_anchors)

    @property
    def tensor_dims(self) -> tuple[int, int, int]:
        return (self.grid_h, self.grid_w, self.channels)


@dataclass(frozen=True)
class DecodedBox:
    """One decoded candidate in input-image pixel coordinates."""

    box: Box
    confidence: float
    class_id: int

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    def sort_key(self):
        # confidence descending, then lower class id / x / y / w / h
        return (-self.confidence, self.class_id, self.box.x, self.box.y, self.box.w, self.box.h)


def filter_count(num_classes: int, num_anchors: int) -> int:
    """Channel count of a grid head: (classes + 5) * anchors."""
    if num_classes < 1 or num_anchors < 1:
        raise ValueError("class and anchor counts must be >= 1")
    return (num_classes + 5) * num_anchors


def validate_input_stride(input_w: int, input_h: int, stride: int = 32) -> None:
    """Reject detector input sizes the 32x-downsampling backbone cannot produce."""
    if input_w % stride or input_h % stride:
        raise ValueError(f"input {input_w}x{input_h} must be divisible by {stride}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0 when disjoint, 1 iff equal."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_wh(w1: float, h1: float, w2: float, h2: float) -> float:
    """IoU of two co-centered boxes; depends only on widths and heights."""
    inter = min(w1, w2) * min(h1, h2)
    return inter / (w1 * h1 + w2 * h2 - inter)


def _wh_distances(boxes: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # 1 - IoU between every (w, h) box and every center, co-centered
    inter = np.minimum(boxes[:, None, 0], centers[None, :, 0]) * np.minimum(
        boxes[:, None, 1], centers[None, :, 1]
    )
    areas = boxes[:, 0] * boxes[:, 1]
    center_areas = centers[:, 0] * centers[:, 1]
    return 1.0 - inter / (areas[:, None] + center_areas[None, :] - inter)


def kmeans_anchors(
    boxes: Sequence[tuple[float, float]],
    k: int,
    seed: int,
    objective_history: list[float] | None = None,
) -> list[Anchor]:
    """Cluster (w, h) pairs into k anchors under the 1 - IoU distance.

    Farthest-point seeding from a seeded random first pick, mean centroid
    updates, and iteration until the assignment stops changing (or 300
    rounds).  The mean 1 - IoU objective is guarded against increases, so it
    is non-increasing across iterations by construction; pass a list as
    ``objective_history`` to observe it.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    arr = np.asarray(boxes, dtype=float).reshape(-1, 2)
    if arr.shape[0] < k:
        raise InsufficientBoxes(f"{arr.shape[0]} boxes for k={k}")
    if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
        raise ValueError("box sides must be positive finite")

    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(arr.shape[0]))]
    while len(chosen) < k:
        d = _wh_distances(arr, arr[chosen]).min(axis=1)
        chosen.append(int(np.argmax(d)))
    centers = arr[chosen].copy()

    assignment = _wh_distances(arr, centers).argmin(axis=1)
    objective = float(_wh_distances(arr, centers).min(axis=1).mean())
    if objective_history is not None:
        objective_history.append(objective)
    for _ in range(KMEANS_MAX_ITER):
        new_centers = centers.copy()
        for j in range(k):
            members = arr[assignment == j]
            if members.size:
                new_centers[j] = members.mean(axis=0)
        new_assignment = _wh_distances(arr, new_centers).argmin(axis=1)
        new_objective = float(_wh_distances(arr, new_centers).min(axis=1).mean())
        if new_objective > objective:
            break
        centers, objective = new_centers, new_objective
        if objective_history is not None:
            objective_history.append(objective)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment

    order = np.lexsort((centers[:, 1], centers[:, 0] * centers[:, 1]))
    return [Anchor(float(w), float(h)) for w, h in centers[order]]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def decode_grid(t: PredictionTensor, spec: GridSpec, conf_threshold: float) -> list[DecodedBox]:
    """Decode a raw grid tensor into candidate boxes above ``conf_threshold``.

    Boxes come back in corner form, clamped to the input-image bounds, in
    deterministic row-major cell/anchor order.
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError("conf_threshold must be in [0, 1]")
    if t.dims != spec.tensor_dims:
        raise ShapeMismatch(
            f"tensor dims {t.dims} != {spec.tensor_dims} required by grid "
            f"{spec.grid_w}x{spec.grid_h} with {spec.num_anchors} anchors and "
            f"{spec.num_classes} classes ((C+5)*A = {spec.channels} channels)"
        )
    a = spec.num_anchors
    c = spec.num_classes
    raw = t.as_array().astype(np.float64).reshape(spec.grid_h, spec.grid_w, a, c + 5)

    txy = _sigmoid(raw[..., 0:2])
    twh = raw[..., 2:4]
    objectness = _sigmoid(raw[..., 4])
    logits = raw[..., 5:]
    logits = logits - logits.max(axis=-1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=-1, keepdims=True)
    class_ids = probs.argmax(axis=-1)
    conf = objectness * np.take_along_axis(probs, class_ids[..., None], axis=-1)[..., 0]

    cx = np.arange(spec.grid_w, dtype=np.float64)[None, :, None]
    cy = np.arange(spec.grid_h, dtype=np.float64)[:, None, None]
    pw = np.array([an.pw for an in spec.anchors], dtype=np.float64)[None, None, :]
    ph = np.array([an.ph for an in spec.anchors], dtype=np.float64)[None, None, :]

    bx = (txy[..., 0] + cx) / spec.grid_w * spec.input_w
    by = (txy[..., 1] + cy) / spec.grid_h * spec.input_h
    bw = pw * np.exp(twh[..., 0]) / spec.grid_w * spec.input_w
    bh = ph * np.exp(twh[..., 1]) / spec.grid_h * spec.input_h

    out: list[DecodedBox] = []
    for gy, gx, ai in np.argwhere(conf >= conf_threshold):
        x0 = max(0.0, bx[gy, gx, ai] - bw[gy, gx, ai] / 2)
        y0 = max(0.0, by[gy, gx, ai] - bh[gy, gx, ai] / 2)
        x1 = min(float(spec.input_w), bx[gy, gx, ai] + bw[gy, gx, ai] / 2)
        y1 = min(float(spec.input_h), by[gy, gx, ai] + bh[gy, gx, ai] / 2)
        out.append(
            DecodedBox(
                box=Box(x0, y0, x1 - x0, y1 - y0),
                confidence=float(conf[gy, gx, ai]),
                class_id=int(class_ids[gy, gx, ai]),
            )
        )
    return out


def nms(boxes: Sequence[DecodedBox], iou_threshold: float) -> list[DecodedBox]:
    """Greedy per-class non-maximal suppression.

    Boxes are visited by confidence descending (ties: lower class id, then
    lower x, y, w, h) and kept iff their IoU with every already-kept box of
    the same class is strictly below the threshold.  Output order is the
    visit order, so the result is invariant under input permutation.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    kept: list[DecodedBox] = []
    for cand in sorted(boxes, key=DecodedBox.sort_key):
        if all(iou(cand.box, k.box) < iou_threshold for k in kept if k.class_id == cand.class_id):
            kept.append(cand)
    return kept


def select_counter(boxes: Sequence[DecodedBox]) -> DecodedBox | None:
    """Highest-confidence detection, or None when nothing was found.

    A None return signals a negative reading result: each image holds exactly
    one counter, so there is nothing to recognize.
    """
    if not boxes:
        return None
    return min(boxes, key=DecodedBox.sort_key)


def expand_margin(b: Box, m: float, image_w: float, image_h: float) -> Box:
    """Scale a box by (1 + m) about its center, clamped to the image bounds."""
    if m < 0:
        raise ValueError("margin must be >= 0")
    w = b.w * (1.0 + m)
    h = b.h * (1.0 + m)
    x0 = max(0.0, b.cx - w / 2)
    y0 = max(0.0, b.cy - h / 2)
    x1 = min(float(image_w), b.cx + w / 2)
    y1 = min(float(image_h), b.cy + h / 2)
    return Box(x0, y0, x1 - x0, y1 - y0)


def save_anchors(anchors: Sequence[Anchor], path: str | Path) -> None:
    """Write anchors as a JSON list of [pw, ph] pairs in grid units."""
    payload = [[a.pw, a.ph] for a in anchors]
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_anchors(path: str | Path) -> tuple[Anchor, ...]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return tuple(Anchor(float(w), float(h)) for w, h in payload)


def box_record(image_id: str, d: DecodedBox) -> dict:
    """JSON-lines record for one decoded box."""
    return {
        "image_id": image_id,
        "class_id": d.class_id,
        "confidence": d.confidence,
        "x": d.box.x,
        "y": d.box.y,
        "w": d.box.w,
        "h": d.box.h,
    }
