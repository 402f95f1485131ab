"""Desk-scale training demo: a few hundred iterations on synthetic clips.

Trains the small model briefly on four synthetic sequences and compares
held-out PSNR against line-average and bob.  A few hundred iterations
only begin to close the gap; the acceptance run uses 5000 iterations.
Run: python3 demos/03_train_small.py [iters]
"""

import sys
import tempfile

import numpy as np

from deinterlace import baselines, metrics, model, synthetic, training
from deinterlace.fields import Field, Parity, sliding_windows, split_fields, weave


def field_stream(frames):
    fields = []
    for t, frame in enumerate(frames):
        odd, even = split_fields(frame)
        f = odd if t % 2 == 0 else even
        fields.append(Field(f.pixels, Parity.ODD if t % 2 == 0 else Parity.EVEN, t))
    return fields


def mean_psnr(outputs, frames):
    return float(np.mean([metrics.psnr(o.pixels, f.pixels) for o, f in zip(outputs, frames)]))


def main():
    iters = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    train_seqs = [synthetic.make_sequence(12, 64, 64, seed=10 + s) for s in range(4)]
    held = synthetic.make_sequence(12, 64, 64, seed=20)
    cfg = model.ModelConfig("small")
    tcfg = training.TrainConfig(total_iters=iters, batch=2, patch_h=32, patch_w=32, seed=0,
                                checkpoint_every=max(iters, 1))

    with tempfile.TemporaryDirectory() as out:
        weights, curve = training.train_loop(train_seqs, cfg, tcfg, out, log=print)

    fields = field_stream(held)
    outputs = [None] * len(fields)
    for s in sliding_windows(len(fields)):
        preds, _ = model.forward(fields[s : s + 6], cfg, weights)
        for off, pred in enumerate(preds):
            if outputs[s + off] is None:
                outputs[s + off] = weave(fields[s + off], pred)

    print(f"\nheld-out mean PSNR after {iters} iterations:")
    print(f"  model        {mean_psnr(outputs, held):.3f} dB")
    for kind in ("line-average", "bob"):
        outs = baselines.deinterlace_baseline(kind, fields)
        print(f"  {kind:<12} {mean_psnr(outs, held):.3f} dB")


if __name__ == "__main__":
    main()
