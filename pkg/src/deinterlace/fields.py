"""Progressive frames, interlaced fields, and supervised sample assembly.

Line numbering is 1-based when talking about parity: the odd field holds
frame rows 1,3,5,... which are row indices 0,2,4,... internally.  All
scalars live in [0,1]; 8/16-bit images are normalized at the I/O boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParityError, ShapeError


class Parity(Enum):
    ODD = "odd"
    EVEN = "even"

    @property
    def complement(self):
        return Parity.EVEN if self is Parity.ODD else Parity.ODD


@dataclass(frozen=True)
class Frame:
    """A progressive RGB frame: (H, W, 3) scalars in [0,1], H even."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeError(f"frame must be (H,W,3), got {px.shape}")
        if px.shape[0] % 2 != 0:
            raise ShapeError(f"frame height must be even, got {px.shape[0]}")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Field:
    """Half-height slice of a frame: (H/2, W, 3) plus a parity tag."""

    pixels: np.ndarray
    parity: Parity
    source_frame_index: int = -1

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ShapeError(f"field must be (rows,W,3), got {self.pixels.shape}")

    @property
    def rows(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class TrainingSample:
    """Six input fields with parities O,E,O,E,O,E and their complements as targets."""

    inputs: tuple
    targets: tuple

    def __post_init__(self):
        if len(self.inputs) != 6 or len(self.targets) != 6:
            raise ShapeError("training sample needs exactly 6 input and 6 target fields")
        for t, (inp, tgt) in enumerate(zip(self.inputs, self.targets)):
            if inp.parity is not tgt.parity.complement:
                raise ParityError(f"timestep {t}: input/target parities must be complementary")


def split_fields(frame):
    """Partition a frame into its odd field (rows 1,3,... 1-based) and even field."""
    odd = Field(frame.pixels[0::2], Parity.ODD)
    even = Field(frame.pixels[1::2], Parity.EVEN)
    return odd, even


def weave(field_a, field_b):
    """Reassemble a frame from two complementary-parity fields (inverse of split)."""
    if field_a.parity is field_b.parity:
        raise ParityError(f"weave needs complementary parities, got {field_a.parity} twice")
    if field_a.pixels.shape != field_b.pixels.shape:
        raise ShapeError(f"weave field shapes differ: {field_a.pixels.shape} vs {field_b.pixels.shape}")
    odd = field_a if field_a.parity is Parity.ODD else field_b
    even = field_b if field_a.parity is Parity.ODD else field_a
    h2, w, c = odd.pixels.shape
    out = np.empty((h2 * 2, w, c), dtype=odd.pixels.dtype)
    out[0::2] = odd.pixels
    out[1::2] = even.pixels
    return Frame(out)


def interlace_pair(frame1, frame2):
    """Combine odd rows of frame1 with even rows of frame2 into one interlaced frame."""
    if frame1.pixels.shape != frame2.pixels.shape:
        raise ShapeError(f"interlace frames differ in shape: {frame1.pixels.shape} vs {frame2.pixels.shape}")
    out = frame2.pixels.copy()
    out[0::2] = frame1.pixels[0::2]
    return Frame(out)


def make_training_sample(frames):
    """Build a supervised sample from 6 consecutive frames.

    Inputs take parities O,E,O,E,O,E from frames 1..6; targets are the
    complementary fields of the same frames.
    """
    frames = list(frames)
    if len(frames) != 6:
        raise ShapeError(f"training sample needs 6 frames, got {len(frames)}")
    shape = frames[0].pixels.shape
    for f in frames[1:]:
        if f.pixels.shape != shape:
            raise ShapeError("all frames in a sample must share dimensions")
    inputs = []
    targets = []
    for t, frame in enumerate(frames):
        odd, even = split_fields(frame)
        odd = Field(odd.pixels, Parity.ODD, t)
        even = Field(even.pixels, Parity.EVEN, t)
        if t % 2 == 0:
            inputs.append(odd)
            targets.append(even)
        else:
            inputs.append(even)
            targets.append(odd)
    return TrainingSample(tuple(inputs), tuple(targets))


def sliding_windows(num_fields, window=6):
    """Start indices of 6-field inference windows covering an arbitrary-length clip.

    Windows overlap when the length is not a multiple of 6; overlapping
    predictions are resolved by keeping the first window's output.
    """
    if num_fields < window:
        raise ShapeError(f"need at least {window} fields, got {num_fields}")
    starts = list(range(0, num_fields - window + 1, window))
    if starts[-1] + window < num_fields:
        starts.append(num_fields - window)
    return starts
