"""Tour of the classical deinterlacers on a synthetic moving clip.

Generates a progressive clip, drops every other field (the interlaced
observation), reconstructs it with each baseline, and prints a PSNR/SSIM
table.  Run: python3 demos/01_baselines_tour.py
"""

import numpy as np

from deinterlace import baselines, metrics, synthetic
from deinterlace.fields import Field, Parity, split_fields


def field_stream(frames):
    """One field per frame, alternating parity, as a capture card would emit."""
    fields = []
    for t, frame in enumerate(frames):
        odd, even = split_fields(frame)
        f = odd if t % 2 == 0 else even
        fields.append(Field(f.pixels, Parity.ODD if t % 2 == 0 else Parity.EVEN, t))
    return fields


def main():
    frames = synthetic.make_sequence(12, 64, 64, seed=7, max_speed=1.5)
    fields = field_stream(frames)
    print(f"clip: {len(frames)} frames of {frames[0].pixels.shape[0]}x{frames[0].pixels.shape[1]}")
    print(f"{'method':>16}  {'psnr (dB)':>9}  {'ssim':>7}")
    for kind in baselines.BaselineKind:
        outs = baselines.deinterlace_baseline(kind.value, fields)
        psnr = np.mean([metrics.psnr(o.pixels, f.pixels) for o, f in zip(outs, frames)])
        ssim = np.mean([metrics.ssim(o.pixels, f.pixels) for o, f in zip(outs, frames)])
        print(f"{kind.value:>16}  {psnr:9.3f}  {ssim:7.4f}")


if __name__ == "__main__":
    main()
