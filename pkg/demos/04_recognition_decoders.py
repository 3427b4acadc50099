"""The three counter-recognition decoders side by side.

All three consume raw network outputs and emit the same ReadingResult shape:

- box assembly (a digit detector read left-to-right, fixed or variable length)
- multi-head argmax (five independent 10-way classifiers, always 5 digits)
- CTC greedy (frame labels with a blank, collapse repeats, variable length)

    python demos/04_recognition_decoders.py
"""

import numpy as np

from amrkit import (
    Box,
    CtcFrameMatrix,
    decode_crnet,
    decode_ctc_greedy,
    decode_multitask,
    synthesize_grid,
)
from amrkit.config import DEFAULT_CRNET_SPEC

# --- decoder 1: digit boxes assembled left to right --------------------------------
# The digit head is a 50x13 grid over a 400x106 crop.  Place five confident
# digit boxes and decode; the reading is their classes in x order.
spec = DEFAULT_CRNET_SPEC
tensor = synthesize_grid(
    spec,
    [(Box(30 + i * 75, 20, 50, 66), cls, 0.93) for i, cls in enumerate((0, 4, 0, 6, 3))],
)

fixed = decode_crnet(tensor, spec, mode="fixed5", threshold=0.5)
print("fixed5 :", fixed.status, repr(fixed.reading),
      "confidences", [round(c, 2) for c in fixed.digit_confidences])

# Remove one digit: fixed5 rejects the counter rather than padding with zeros
# (a padded reading would massively misstate the consumption).
four = synthesize_grid(
    spec,
    [(Box(30 + i * 75, 20, 50, 66), cls, 0.93) for i, cls in enumerate((4, 0, 6, 3))],
)
short = decode_crnet(four, spec, mode="fixed5", threshold=0.5)
print("fixed5 with 4 digits:", short.status)

# Variable mode keeps every digit above the confidence threshold instead, so
# counters with 4-7 digits decode naturally.
variable = decode_crnet(four, spec, mode="variable", threshold=0.5)
print("variable with 4 digits:", variable.status, repr(variable.reading))

# --- decoder 2: one classifier per position ------------------------------------------
logits = np.full((5, 10), -3.0)
for pos, cls in enumerate((0, 4, 0, 6, 3)):
    logits[pos, cls] = 4.0
multi = decode_multitask(logits)
print("\nmulti-head:", repr(multi.reading),
      "confidences", [round(c, 3) for c in multi.digit_confidences])

# --- decoder 3: CTC greedy -------------------------------------------------------------
# 12 frames over 11 labels (digits + blank).  Repeats collapse, blanks drop:
# [0 0 b 4 b 0 b 6 6 b 3 3] -> 04063.  A repeated digit needs a blank between
# its runs, which is exactly what the frame sequence provides.
BLANK = 10
labels = [0, 0, BLANK, 4, BLANK, 0, BLANK, 6, 6, BLANK, 3, 3]
frames = np.full((len(labels), 11), 0.005)
for t, lab in enumerate(labels):
    frames[t, lab] = 1.0 - 0.005 * 10
ctc = decode_ctc_greedy(CtcFrameMatrix(frames / frames.sum(axis=1, keepdims=True)))
print("CTC    :", repr(ctc.reading), "confidences", [round(c, 3) for c in ctc.digit_confidences])

all_blank = np.zeros((8, 11))
all_blank[:, BLANK] = 1.0
print("CTC on silence:", repr(decode_ctc_greedy(CtcFrameMatrix(all_blank)).reading))
