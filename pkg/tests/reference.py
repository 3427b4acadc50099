"""Independent reference implementations the main code is checked against.

These are deliberately written with different techniques than the library
(pixel counting instead of interval arithmetic, groupby instead of a manual
run loop, repeated linear scans instead of one sort) so agreement is
meaningful.
"""

from itertools import groupby

import numpy as np

from amrkit.dataset import Box
from amrkit.detect import DecodedBox, iou


def unit_cell_iou(a: Box, b: Box) -> float:
    """IoU of integer-aligned boxes by counting occupied unit cells."""
    extent = int(max(a.x2, b.x2)) + 1
    extent_y = int(max(a.y2, b.y2)) + 1
    grid_a = np.zeros((extent_y, extent), dtype=bool)
    grid_b = np.zeros((extent_y, extent), dtype=bool)
    grid_a[int(a.y):int(a.y2), int(a.x):int(a.x2)] = True
    grid_b[int(b.y):int(b.y2), int(b.x):int(b.x2)] = True
    inter = np.count_nonzero(grid_a & grid_b)
    union = np.count_nonzero(grid_a | grid_b)
    return inter / union


def _nms_rank(d):
    return (-d.confidence, d.class_id, d.box.x, d.box.y, d.box.w, d.box.h)


def brute_force_nms(boxes, iou_threshold):
    """O(n^2) NMS: repeatedly pull the best remaining box by linear scan."""
    remaining = list(boxes)
    kept = []
    while remaining:
        best_i = 0
        for i in range(1, len(remaining)):
            if _nms_rank(remaining[i]) < _nms_rank(remaining[best_i]):
                best_i = i
        best = remaining.pop(best_i)
        if all(
            iou(best.box, k.box) < iou_threshold
            for k in kept
            if k.class_id == best.class_id
        ):
            kept.append(best)
    return kept


def ctc_reference_decode(frames: np.ndarray) -> str:
    """Collapse-then-drop-blanks via groupby on the per-frame argmax."""
    labels = frames.argmax(axis=1)
    return "".join(str(int(lab)) for lab, _ in groupby(labels) if lab != 10)


def reference_softmax(row: np.ndarray) -> np.ndarray:
    row = np.asarray(row, dtype=np.float64)
    e = np.exp(row - row.max())
    return e / e.sum()


def random_decoded_boxes(rng, count, num_classes=3, extent=100):
    """Random DecodedBox instances for NMS stress tests."""
    out = []
    for _ in range(count):
        w = float(rng.uniform(5, 40))
        h = float(rng.uniform(5, 40))
        out.append(
            DecodedBox(
                box=Box(float(rng.uniform(0, extent - w)), float(rng.uniform(0, extent - h)), w, h),
                confidence=float(rng.uniform(0, 1)),
                class_id=int(rng.integers(0, num_classes)),
            )
        )
    return out
