"""Classical deinterlacers: bob, weave, line average, ELA, motion adaptive.

All baselines copy the present field rows bit-exactly into their parity
positions and only synthesize the missing rows.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import ParityError, ShapeError
from .fields import Field, Frame, Parity, weave


class BaselineKind(Enum):
    BOB = "bob"
    WEAVE = "weave"
    LINE_AVERAGE = "line-average"
    ELA = "ela"
    MOTION_ADAPTIVE = "motion-adaptive"


def _frame_with_field(field):
    """Empty frame with the field's rows placed at their parity positions."""
    rows, w, c = field.pixels.shape
    out = np.zeros((rows * 2, w, c), dtype=field.pixels.dtype)
    out[_present_slice(field.parity)] = field.pixels
    return out


def _present_slice(parity):
    return slice(0, None, 2) if parity is Parity.ODD else slice(1, None, 2)


def _missing_rows(parity, height):
    start = 1 if parity is Parity.ODD else 0
    return range(start, height, 2)


def bob(field):
    """Line replication: each present row fills the adjacent missing row."""
    out = _frame_with_field(field)
    h = out.shape[0]
    for r in _missing_rows(field.parity, h):
        src = r - 1 if (field.parity is Parity.ODD or r == h - 1) and r > 0 else r + 1
        out[r] = out[src]
    return Frame(out)


def line_average(field):
    """Missing rows = mean of the present rows above and below (edges replicate)."""
    out = _frame_with_field(field)
    h = out.shape[0]
    for r in _missing_rows(field.parity, h):
        above = r - 1 if r > 0 else r + 1
        below = r + 1 if r < h - 1 else r - 1
        out[r] = 0.5 * (out[above] + out[below])
    return Frame(out)


def ela(field):
    """Edge-based line average over three directions (135, 90, 45 degrees).

    Per missing pixel the direction with the smallest absolute difference
    between its two present-row endpoints is averaged; ties prefer
    vertical.
    """
    out = _frame_with_field(field)
    h, w, _ = out.shape
    for r in _missing_rows(field.parity, h):
        if r == 0 or r == h - 1:
            out[r] = out[r - 1 if r > 0 else r + 1]
            continue
        up, dn = out[r - 1], out[r + 1]
        pad_u = np.pad(up, ((1, 1), (0, 0)), mode="edge")
        pad_d = np.pad(dn, ((1, 1), (0, 0)), mode="edge")
        cols = np.arange(w)
        # candidate pairs: (up shifted left, down shifted right) etc.
        pairs = [
            (pad_u[cols], pad_d[cols + 2]),  # 135 degrees
            (up, dn),  # vertical
            (pad_u[cols + 2], pad_d[cols]),  # 45 degrees
        ]
        diffs = np.stack([np.abs(a - b).sum(axis=1) for a, b in pairs])
        # vertical wins ties: scan in preference order vertical, 135, 45
        best = np.ones(w, dtype=np.intp)
        dmin = diffs[1]
        for cand in (0, 2):
            better = diffs[cand] < dmin
            best[better] = cand
            dmin = np.minimum(dmin, diffs[cand])
        avgs = np.stack([0.5 * (a + b) for a, b in pairs])
        out[r] = avgs[best, cols]
    return Frame(out)


def weave_pair(field_a, field_b):
    """Temporal insertion: interleave two complementary-parity fields."""
    return weave(field_a, field_b)


def motion_adaptive(prev, cur, nxt, threshold=4.0 / 255.0):
    """Blend weave (static pixels) and line average (moving pixels).

    A missing pixel is static when the complementary neighbors ``prev``
    and ``nxt`` agree there within ``threshold`` (mean absolute channel
    difference); static pixels take the previous field's value.
    """
    if prev.parity is cur.parity or nxt.parity is cur.parity:
        raise ParityError("motion_adaptive needs complementary-parity neighbors")
    if prev.pixels.shape != cur.pixels.shape or nxt.pixels.shape != cur.pixels.shape:
        raise ShapeError("motion_adaptive fields must share resolution")
    la = line_average(cur).pixels
    out = _frame_with_field(cur)
    missing = _present_slice(cur.parity.complement)
    motion = np.abs(prev.pixels - nxt.pixels).mean(axis=2, keepdims=True)
    static = motion < threshold
    out[missing] = np.where(static, prev.pixels, la[missing])
    return Frame(out)


def deinterlace_baseline(kind, fields):
    """Apply one baseline over a field sequence, returning one frame per field."""
    kind = BaselineKind(kind)
    frames = []
    for i, f in enumerate(fields):
        if kind is BaselineKind.BOB:
            frames.append(bob(f))
        elif kind is BaselineKind.LINE_AVERAGE:
            frames.append(line_average(f))
        elif kind is BaselineKind.ELA:
            frames.append(ela(f))
        elif kind is BaselineKind.WEAVE:
            j = i + 1 if i + 1 < len(fields) else i - 1
            frames.append(weave_pair(f, fields[j]))
        else:
            p = fields[i - 1] if i > 0 else fields[i + 1]
            n = fields[i + 1] if i + 1 < len(fields) else fields[i - 1]
            frames.append(motion_adaptive(p, f, n))
    return frames
