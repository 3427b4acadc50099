"""Dataset tour: annotation files, validation, splits, and statistics.

Builds a small synthetic meter dataset on disk, then walks the full data
management surface.  Run directly:

    python demos/01_dataset_tour.py
"""

import tempfile
from pathlib import Path

import numpy as np

from amrkit import (
    Box,
    MeterAnnotation,
    compute_stats,
    parse_annotation,
    serialize_annotation,
    split_dataset,
    validate_dataset,
)

# --- an annotation is a tiny text file -----------------------------------------
# One file per image, same stem.  Five digit boxes, left to right, plus the
# five-digit reading they spell.

text = """\
camera: iPhone 6s
counter: 100 200 600 160
reading: 04063
digit: 120 220 80 120
digit: 240 220 80 120
digit: 360 220 80 120
digit: 480 220 80 120
digit: 590 220 80 120
"""

ann = parse_annotation(text, image_id="demo")
print("parsed:", ann.image_id, ann.camera, ann.reading)
print("counter box:", ann.counter)
print("round-trips:", serialize_annotation(ann) == text)

# --- rotating digits -------------------------------------------------------------
# A drum caught between positions is labeled with the digit it is leaving;
# the 9->0 wrap stays 9 so a nearly-complete carry cannot inflate the reading.
from amrkit import resolve_transition_digit

for pair in [(4, 5), (9, 0), (0, 1)]:
    print(f"transition {pair} labels as {resolve_transition_digit(*pair)}")

# --- build a toy dataset on disk and validate it ---------------------------------
workdir = Path(tempfile.mkdtemp(prefix="amrkit_demo_"))
rng = np.random.default_rng(0)
ids = []
for i in range(12):
    reading = "".join(str(d) for d in rng.integers(0, 10, 5))
    counter = Box(80, 150, 600, 160)
    digits = tuple(Box(100 + k * 118, 175, 80, 110) for k in range(5))
    a = MeterAnnotation(f"meter{i:03d}", "demo-cam", counter, digits, reading)
    (workdir / f"{a.image_id}.txt").write_text(serialize_annotation(a))
    # a white placeholder image; validation only checks the pairing
    from amrkit.raster import save_png

    save_png(np.full((400, 760, 3), 255, dtype=np.uint8), workdir / f"{a.image_id}.png")
    ids.append(a.image_id)

print("\nviolations in a conforming set:", validate_dataset(workdir))

# break one file and watch the validator catch it
(workdir / "meter003.txt").write_text("camera: broken\n")
for image_id, violation in validate_dataset(workdir):
    print(f"found: {image_id} -> {violation.kind}: {violation.detail}")
(workdir / "meter003.txt").write_text(serialize_annotation(parse_annotation(text, "meter003")))

# --- deterministic splits ---------------------------------------------------------
# The 2/1/2 protocol: with 2000 images that is exactly 800/400/800.
split = split_dataset(ids, ratios=(0.4, 0.2, 0.4), seed=42)
print("\nsplit sizes:", len(split.train), len(split.validation), len(split.test))
print("same seed, same split:", split == split_dataset(ids, (0.4, 0.2, 0.4), 42))

# --- statistics -------------------------------------------------------------------
annotations = [parse_annotation((workdir / f"{i}.txt").read_text(), i) for i in sorted(ids)]
stats = compute_stats(annotations)
print("\ncounter mean size: %.0fx%.0f, aspect %.2f" % (
    stats.counter_sizes.mean_w, stats.counter_sizes.mean_h, stats.counter_aspect_ratio))
print("digit frequency matrix (rows = classes 0..9, cols = positions):")
print(stats.digit_frequency)
print("matrix total equals 5 per image:", stats.digit_frequency.sum() == 5 * len(annotations))
