"""Command-line interface: synth, deinterlace, train, eval, bench.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
failure.  All commands are deterministic for a fixed ``--seed``; image
I/O accepts lossless formats only unless ``--allow-lossy`` is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import imgio, metrics, model, synthetic, training
from .errors import DeinterlaceError, FormatError, NumericalError
from .fields import Field, Parity, interlace_pair, sliding_windows, split_fields, weave

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERICAL = 4

METHODS = ("model", "bob", "weave", "line-average", "ela", "motion-adaptive")


def _read_model_config(path):
    """Model config as key=value lines (variant plus ablation flags)."""
    kwargs = {}
    booleans = {"image_alignment", "bidirectional", "fgda", "snaf"}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "variant":
            kwargs[key] = value
        elif key in booleans:
            if value.lower() not in ("true", "false"):
                raise FormatError(f"{path}:{lineno}: {key} must be true or false, got {value!r}")
            kwargs[key] = value.lower() == "true"
        else:
            raise FormatError(f"{path}:{lineno}: unknown model config key {key!r}")
    return model.ModelConfig(**kwargs)


def _model_config(args):
    if getattr(args, "config", None):
        return _read_model_config(args.config)
    return model.ModelConfig()


def _emit(report_lines, args):
    text = "".join(f"{line}\n" for line in report_lines)
    if getattr(args, "report_file", None):
        Path(args.report_file).write_text(text)
    else:
        sys.stdout.write(text)


# -- synth ---------------------------------------------------------------------


def _sequence_dirs(root):
    root = Path(root)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    return subdirs if subdirs else [root]


def cmd_synth(args):
    out_root = Path(args.output)
    out_root.mkdir(parents=True, exist_ok=True)
    produced = []

    if args.generate:
        sources = []
        for s in range(args.generate):
            frames = synthetic.make_sequence(
                args.frames, args.size, args.size, seed=args.seed + s, max_speed=args.max_speed
            )
            sources.append((f"seq{s:03d}", frames))
    else:
        if not args.input:
            raise FormatError("synth needs --input or --generate")
        sources = []
        for d in _sequence_dirs(args.input):
            try:
                frames = imgio.read_sequence(d, allow_lossy=args.allow_lossy)
            except DeinterlaceError as exc:
                print(f"warning: skipping {d}: {exc}", file=sys.stderr)
                continue
            sources.append((d.name, frames))

    for name, frames in sources:
        if len(frames) < 6:
            print(f"warning: skipping {name}: fewer than 6 frames", file=sys.stderr)
            continue
        seq_dir = out_root / name
        for sub in ("progressive", "interlaced", "fields"):
            (seq_dir / sub).mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frames):
            imgio.write_image(seq_dir / "progressive" / f"frame_{i:04d}.png", frame.pixels)
            odd, even = split_fields(frame)
            imgio.write_image(seq_dir / "fields" / f"field_{i:04d}_odd.png", odd.pixels)
            imgio.write_image(seq_dir / "fields" / f"field_{i:04d}_even.png", even.pixels)
        # one interlaced frame per progressive pair: odd rows from frame 2k,
        # even rows from frame 2k+1 (one field per original time step)
        for k in range(len(frames) // 2):
            imgio.write_image(
                seq_dir / "interlaced" / f"frame_{k:04d}.png",
                interlace_pair(frames[2 * k], frames[2 * k + 1]).pixels,
            )
        produced.append(seq_dir / "progressive")

    if not produced:
        raise FormatError("synth produced no sequences")
    imgio.write_manifest(out_root / "manifest.txt", produced)
    print(f"wrote {len(produced)} sequences under {out_root}")
    return EXIT_OK


# -- deinterlace ---------------------------------------------------------------


def _fields_from_frames(frames):
    """Field stream of an interlaced clip: frame k holds times 2k (odd rows)
    and 2k+1 (even rows)."""
    fields = []
    for k, frame in enumerate(frames):
        odd, even = split_fields(frame)
        fields.append(Field(odd.pixels, Parity.ODD, 2 * k))
        fields.append(Field(even.pixels, Parity.EVEN, 2 * k + 1))
    return fields


def _model_deinterlace(fields, cfg, weights):
    frames = [None] * len(fields)
    for start in sliding_windows(len(fields)):
        window = fields[start : start + 6]
        preds, _ = model.forward(window, cfg, weights)
        for off, pred in enumerate(preds):
            i = start + off
            if frames[i] is None:  # first-window prediction wins on overlap
                frames[i] = weave(fields[i], pred)
    return frames


def cmd_deinterlace(args):
    frames = imgio.read_sequence(args.input, allow_lossy=args.allow_lossy)
    if not frames:
        raise FormatError(f"{args.input}: no frames found")
    fields = _fields_from_frames(frames)
    if args.method == "model":
        cfg = _model_config(args)
        weights = model.load_weights(args.weights, cfg, requires_grad=False)
        out_frames = _model_deinterlace(fields, cfg, weights)
    else:
        out_frames = bl.deinterlace_baseline(args.method, fields)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(out_frames):
        imgio.write_image(out_dir / f"frame_{i:04d}.png", frame.pixels)
    print(f"wrote {len(out_frames)} frames to {out_dir}")
    return EXIT_OK


# -- train ---------------------------------------------------------------------


def cmd_train(args):
    dirs = imgio.read_manifest(args.manifest)
    if not dirs:
        raise FormatError(f"{args.manifest}: empty manifest")
    sequences = [imgio.read_sequence(d, allow_lossy=args.allow_lossy) for d in dirs]
    cfg = _model_config(args)
    tcfg = training.TrainConfig(
        total_iters=args.iters,
        batch=args.batch,
        patch_h=args.patch,
        patch_w=args.patch,
        seed=args.seed,
        base_lr=args.lr,
        weight_decay=args.weight_decay,
        checkpoint_every=args.checkpoint_every,
    )
    training.train_loop(sequences, cfg, tcfg, args.output, log=print)
    print(f"training complete; weights under {args.output}")
    return EXIT_OK


# -- eval ----------------------------------------------------------------------


def cmd_eval(args):
    pred_files = imgio.list_sequence(args.pred, allow_lossy=args.allow_lossy)
    gt_files = imgio.list_sequence(args.gt, allow_lossy=args.allow_lossy)
    if len(pred_files) != len(gt_files):
        raise FormatError(f"frame count mismatch: {len(pred_files)} predictions vs {len(gt_files)} references")
    if not pred_files:
        raise FormatError("no frames to evaluate")
    lines = []
    psnrs, ssims = [], []
    for pf, gf in zip(pred_files, gt_files):
        a = imgio.read_image(pf, allow_lossy=args.allow_lossy)
        b = imgio.read_image(gf, allow_lossy=args.allow_lossy)
        p = metrics.psnr(a, b)
        s = metrics.ssim(a, b)
        psnrs.append(p)
        ssims.append(s)
        lines.append(f"frame {pf.name} psnr {'inf' if p == metrics.PSNR_INF else f'{p:.4f}'} ssim {s:.6f}")
    finite = [p for p in psnrs if p != metrics.PSNR_INF]
    mean_psnr = "inf" if not finite else f"{np.mean(finite):.4f}"
    lines.append(f"mean psnr {mean_psnr} ssim {np.mean(ssims):.6f} frames {len(psnrs)}")
    _emit(lines, args)
    return EXIT_OK


# -- bench ---------------------------------------------------------------------


def cmd_bench(args):
    rng = np.random.default_rng(args.seed)
    h = w = 256
    fields = [
        Field(rng.random((h // 2, w, 3)), Parity.ODD if i % 2 == 0 else Parity.EVEN, i) for i in range(6)
    ]
    if args.method == "model":
        cfg = _model_config(args)
        if args.weights:
            weights = model.load_weights(args.weights, cfg, requires_grad=False)
        else:
            weights = model.init_weights(cfg, args.seed)
        flows = model.estimate_window_flows(fields)

        def run():
            model.forward(fields, cfg, weights, flows)

    else:

        def run():
            bl.deinterlace_baseline(args.method, fields)

    stats = metrics.bench_runtime(run, repetitions=args.reps)
    lines = [
        f"method {args.method} crop {h}x{w} reps {args.reps}",
        f"window_ms_median {stats['window_ms_median']:.3f}",
        f"window_ms_mad {stats['window_ms_mad']:.3f}",
        f"frame_ms_median {stats['frame_ms_median']:.3f}",
    ]
    _emit(lines, args)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="deinterlace", description="Video deinterlacing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, report=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--serial", action="store_true", help="force deterministic serial execution")
        p.add_argument("--allow-lossy", action="store_true", help="accept lossy image formats")
        if report:
            p.add_argument("--report-file", default=None)

    p = sub.add_parser("synth", help="split progressive sequences into interlaced data")
    p.add_argument("--input", default=None, help="directory of progressive sequences")
    p.add_argument("--output", required=True)
    p.add_argument("--generate", type=int, default=0, help="generate N synthetic sequences instead of reading --input")
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--max-speed", type=float, default=1.5)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("deinterlace", help="reconstruct progressive frames")
    p.add_argument("--input", required=True, help="directory of interlaced frames")
    p.add_argument("--output", required=True)
    p.add_argument("--method", choices=METHODS, default="model")
    p.add_argument("--weights", default=None)
    p.add_argument("--config", default=None, help="model config key=value file")
    common(p)
    p.set_defaults(func=cmd_deinterlace)

    p = sub.add_parser("train", help="train the model on a manifest of sequences")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--patch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--checkpoint-every", type=int, default=1000)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM of predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    common(p, report=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="latency of one 6-field window on a 256x256 crop")
    p.add_argument("--method", choices=METHODS, default="model")
    p.add_argument("--weights", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--reps", type=int, default=20)
    common(p, report=True)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "deinterlace" and args.method == "model" and not args.weights:
        parser.error("--method model requires --weights")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DeinterlaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
