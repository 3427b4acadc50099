"""Detection post-processing: anchors, grid decoding, NMS, margin expansion.

The detector network itself lives elsewhere; its raw output grid arrives as a
tensor and everything after that happens here.

    python demos/03_detection_decoding.py
"""

import numpy as np

from amrkit import (
    Anchor,
    Box,
    GridSpec,
    decode_grid,
    expand_margin,
    filter_count,
    iou,
    kmeans_anchors,
    nms,
    select_counter,
)
from amrkit.tensorio import PredictionTensor

# --- how wide is a detection head? -----------------------------------------------
# Each anchor predicts 4 coordinates + objectness + per-class scores, so the
# final convolution needs (C + 5) * A channels.
print("1 class,  5 anchors ->", filter_count(1, 5), "channels")   # counter detector
print("10 classes, 5 anchors ->", filter_count(10, 5), "channels")  # digit recognizer

# --- anchors from data -------------------------------------------------------------
# Counters are wide and flat; clustering (w, h) pairs under the 1 - IoU
# distance yields anchors that match their shapes, in grid-cell units.
rng = np.random.default_rng(0)
widths = rng.uniform(2.5, 7.0, 200)
boxes = np.column_stack([widths, widths / rng.uniform(3.2, 4.2, 200)])
anchors = kmeans_anchors(boxes, k=5, seed=1)
print("\nanchors (grid units):", [(round(a.pw, 2), round(a.ph, 2)) for a in anchors])

# --- decoding a grid ----------------------------------------------------------------
# A 13x13 single-class head on a 416x416 input.  We stuff one confident cell
# and leave the rest silent (logit -20 is sigmoid ~2e-9).
spec = GridSpec(grid_w=13, grid_h=13, anchors=tuple(anchors), num_classes=1,
                input_w=416, input_h=416)
raw = np.full(spec.tensor_dims, -20.0, dtype=np.float32)
cell = raw.reshape(13, 13, 5, 6)
cell[6, 4, 2, :2] = 0.0      # offsets: sigmoid(0) = 0.5, dead center of the cell
cell[6, 4, 2, 2:4] = 0.3     # sizes: anchor scaled by e^0.3
cell[6, 4, 2, 4] = 2.0       # objectness: sigmoid(2) = 0.88
cell[6, 4, 2, 5] = 5.0

decoded = decode_grid(PredictionTensor.from_array(raw), spec, conf_threshold=0.25)
for d in decoded:
    print(f"\ndecoded box: ({d.box.x:.1f}, {d.box.y:.1f}, {d.box.w:.1f}, {d.box.h:.1f}) "
          f"confidence {d.confidence:.3f}")

# --- NMS and selection ---------------------------------------------------------------
# Duplicate detections of the same object are suppressed greedily by IoU.
from amrkit import DecodedBox

dupes = [
    DecodedBox(Box(100, 100, 200, 60), 0.90, 0),
    DecodedBox(Box(104, 102, 198, 59), 0.80, 0),   # same counter, weaker
    DecodedBox(Box(600, 300, 180, 50), 0.40, 0),   # a different textual block
]
survivors = nms(dupes, iou_threshold=0.5)
print("\nafter NMS:", [(round(d.confidence, 2)) for d in survivors])

# One counter per meter, so the winner is simply the highest confidence.
best = select_counter(survivors)
print("selected counter confidence:", best.confidence)

# --- margin expansion -----------------------------------------------------------------
# A slightly-off detection can clip digits; growing the box 20% about its
# center before cropping keeps them inside the recognizer's view.
tight = Box(100, 100, 200, 50)
grown = expand_margin(tight, 0.2, image_w=1000, image_h=1000)
print(f"\n20% margin: {tight} -> {grown}")
print("IoU of tight vs grown:", round(iou(tight, grown), 3))
