"""Balanced digit-permutation augmentation with photometric/geometric jitter.

New counter images are built by permuting the five digit patches of a source
counter, then applying random brightness, rotation and per-side crop drawn
from configured ranges.  Permutations are planned greedily so digit classes
end up evenly distributed across reading positions.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import raster
from .dataset import (
    NUM_CLASSES,
    NUM_DIGITS,
    Box,
    MeterAnnotation,
    serialize_annotation,
)
from .errors import EmptyDataset, EmptyRange, GeometryError

ALL_PERMUTATIONS: tuple[tuple[int, ...], ...] = tuple(itertools.permutations(range(NUM_DIGITS)))


@dataclass(frozen=True)
class JitterRanges:
    """Closed intervals the jitter draws come from.

    Defaults: brightness factor [0.5, 2], rotation [-5, 5] degrees, per-side
    crop [-2%, 8%] of the counter size (negative crop means outward
    expansion, which clamps to the available raster).
    """

    brightness: tuple[float, float] = (0.5, 2.0)
    rotation_deg: tuple[float, float] = (-5.0, 5.0)
    crop: tuple[float, float] = (-0.02, 0.08)

    def __post_init__(self):
        for name, (lo, hi) in (
            ("brightness", self.brightness),
            ("rotation_deg", self.rotation_deg),
            ("crop", self.crop),
        ):
            if lo > hi:
                raise EmptyRange(f"{name} range has lo {lo} > hi {hi}")
        if self.brightness[0] <= 0:
            raise ValueError("brightness must stay positive")

    def to_dict(self) -> dict:
        return {
            "brightness": list(self.brightness),
            "rotation_deg": list(self.rotation_deg),
            "crop": list(self.crop),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "JitterRanges":
        return cls(
            brightness=tuple(d.get("brightness", (0.5, 2.0))),
            rotation_deg=tuple(d.get("rotation_deg", (-5.0, 5.0))),
            crop=tuple(d.get("crop", (-0.02, 0.08))),
        )


@dataclass(frozen=True)
class AppliedJitter:
    """Jitter values actually applied to one sample (post clamping)."""

    brightness: float
    rotation_deg: float
    crop: tuple[float, float, float, float]  # left, top, right, bottom fractions


@dataclass(frozen=True, eq=False)
class AugmentedSample:
    """One generated counter image plus its provenance.

    ``permutation[p]`` is the source digit index pasted at position p, so
    ``reading[p] == source_reading[permutation[p]]``.
    """

    source_id: str
    camera: str
    permutation: tuple[int, ...]
    reading: str
    applied: AppliedJitter
    image: np.ndarray
    digit_boxes: tuple[Box, ...]


def _permutation_increments(reading: str) -> np.ndarray:
    # inc[j, c, p] = 1 where permutation j puts a class-c digit at position p
    inc = np.zeros((len(ALL_PERMUTATIONS), NUM_CLASSES, NUM_DIGITS), dtype=np.int64)
    for j, perm in enumerate(ALL_PERMUTATIONS):
        for p in range(NUM_DIGITS):
            inc[j, int(reading[perm[p]]), p] += 1
    return inc


def plan_permutations(
    annotations: Sequence[MeterAnnotation], total: int, seed: int
) -> list[tuple[str, tuple[int, ...]]]:
    """Choose ``total`` (source_id, permutation) plans that balance the classes.

    Sources are visited round-robin in a seeded order.  A running count matrix
    C[class][position] accumulates the readings generated so far; each step
    picks, among all 120 permutations of the source's digits, the one that
    minimizes the resulting max-min spread of C restricted to the classes
    present in that source, breaking ties by lexicographically smallest
    permutation.
    """
    if not annotations:
        raise EmptyDataset("no source annotations")
    if total < 0:
        raise ValueError("total must be >= 0")

    sources = sorted(annotations, key=lambda a: a.image_id)
    random.Random(seed).shuffle(sources)
    increments = [_permutation_increments(a.reading) for a in sources]
    present = [sorted({int(c) for c in a.reading}) for a in sources]

    counts = np.zeros((NUM_CLASSES, NUM_DIGITS), dtype=np.int64)
    plans: list[tuple[str, tuple[int, ...]]] = []
    for step in range(total):
        i = step % len(sources)
        candidate = counts[None, present[i], :] + increments[i][:, present[i], :]
        spread = candidate.max(axis=(1, 2)) - candidate.min(axis=(1, 2))
        j = int(spread.argmin())
        counts += increments[i][j]
        plans.append((sources[i].image_id, ALL_PERMUTATIONS[j]))
    return plans


def _local_digit_boxes(ann: MeterAnnotation, width: int, height: int) -> list[Box]:
    # digit boxes in counter-crop coordinates, checked against the raster
    boxes = []
    for i, d in enumerate(ann.digits):
        local = Box(d.x - ann.counter.x, d.y - ann.counter.y, d.w, d.h)
        if local.x < -0.5 or local.y < -0.5 or local.x2 > width + 0.5 or local.y2 > height + 0.5:
            raise GeometryError(f"digit {i} box {local!r} exceeds the {width}x{height} counter crop")
        boxes.append(raster.clamp_box(local, width, height))
    return boxes


def render_sample(
    annotation: MeterAnnotation,
    counter_image: np.ndarray,
    plan: Sequence[int],
    ranges: JitterRanges,
    seed: int,
) -> AugmentedSample:
    """Render one augmented counter from its source crop.

    ``counter_image`` is the crop of the counter box.  Digit patches are
    copied from the pristine source and pasted per the permutation (bilinear
    resize to the destination box), then brightness, rotation about the crop
    center (bilinear, edge-replicate fill) and per-side crop are applied.
    With an identity permutation and zero jitter the output is pixel-equal to
    the input.
    """
    perm = tuple(int(p) for p in plan)
    if sorted(perm) != list(range(NUM_DIGITS)):
        raise ValueError(f"plan must be a permutation of 0..4, got {perm}")
    height, width = counter_image.shape[:2]
    digit_boxes = _local_digit_boxes(annotation, width, height)

    rng = np.random.default_rng(seed)
    brightness = float(rng.uniform(*ranges.brightness))
    rotation = float(rng.uniform(*ranges.rotation_deg))
    crop_draw = [float(rng.uniform(*ranges.crop)) for _ in range(4)]
    # no context pixels beyond the counter crop: outward (negative) crop clamps to 0
    crop_applied = tuple(max(f, 0.0) for f in crop_draw)

    rects = [raster.pixel_rect(b, width, height) for b in digit_boxes]
    patches = [counter_image[y0:y1, x0:x1].copy() for x0, y0, x1, y1 in rects]
    out = counter_image.copy()
    for pos in range(NUM_DIGITS):
        x0, y0, x1, y1 = rects[pos]
        out[y0:y1, x0:x1] = raster.resize_bilinear(patches[perm[pos]], y1 - y0, x1 - x0)

    out = raster.adjust_brightness(out, brightness)
    out = raster.rotate_bilinear(out, rotation)
    center = ((width - 1) / 2.0, (height - 1) / 2.0)
    boxes = [raster.rotate_box(b, rotation, center) for b in digit_boxes]

    left = int(round(crop_applied[0] * width))
    top = int(round(crop_applied[1] * height))
    right = int(round(crop_applied[2] * width))
    bottom = int(round(crop_applied[3] * height))
    if left + right >= width or top + bottom >= height:
        raise GeometryError("crop draws remove the entire raster")
    out = out[top:height - bottom, left:width - right]
    new_h, new_w = out.shape[:2]
    boxes = [
        raster.clamp_box(Box(b.x - left, b.y - top, b.w, b.h), new_w, new_h) for b in boxes
    ]

    reading = "".join(annotation.reading[perm[p]] for p in range(NUM_DIGITS))
    return AugmentedSample(
        source_id=annotation.image_id,
        camera=annotation.camera,
        permutation=perm,
        reading=reading,
        applied=AppliedJitter(brightness, rotation, crop_applied),
        image=out,
        digit_boxes=tuple(boxes),
    )


def generate_set(
    annotations: Sequence[MeterAnnotation],
    images: Mapping[str, np.ndarray],
    total: int,
    ranges: JitterRanges,
    seed: int,
) -> list[AugmentedSample]:
    """Plan and render ``total`` augmented samples, deterministically per seed."""
    plans = plan_permutations(annotations, total, seed) if total else []
    by_id = {a.image_id: a for a in annotations}
    sample_seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, size=len(plans))
    out = []
    for (source_id, perm), sample_seed in zip(plans, sample_seeds):
        out.append(render_sample(by_id[source_id], images[source_id], perm, ranges, int(sample_seed)))
    return out


def sample_annotation(sample: AugmentedSample, sample_id: str) -> MeterAnnotation:
    """Dataset-format annotation for a generated sample (counter = whole raster)."""
    h, w = sample.image.shape[:2]
    return MeterAnnotation(
        image_id=sample_id,
        camera=sample.camera,
        counter=Box(0.0, 0.0, float(w), float(h)),
        digits=sample.digit_boxes,
        reading=sample.reading,
    )


def write_augmented_set(
    samples: Sequence[AugmentedSample],
    out_dir: str | Path,
    ranges: JitterRanges,
    seed: int,
) -> Path:
    """Write PNGs plus sibling annotation files and a reproducibility manifest.

    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_samples = []
    for i, sample in enumerate(samples):
        sample_id = f"{sample.source_id}_aug{i:06d}"
        raster.save_png(sample.image, out_dir / f"{sample_id}.png")
        ann = sample_annotation(sample, sample_id)
        (out_dir / f"{sample_id}.txt").write_text(serialize_annotation(ann), encoding="utf-8")
        manifest_samples.append(
            {
                "id": sample_id,
                "source_id": sample.source_id,
                "permutation": list(sample.permutation),
                "reading": sample.reading,
                "applied": {
                    "brightness": sample.applied.brightness,
                    "rotation_deg": sample.applied.rotation_deg,
                    "crop": list(sample.applied.crop),
                },
            }
        )
    manifest = {"seed": seed, "ranges": ranges.to_dict(), "samples": manifest_samples}
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path
