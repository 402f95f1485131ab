"""Image and sequence I/O.

Frames are stored as directories of numbered image files.  Lossless
formats only: 8-bit PNG/BMP via Pillow and 8/16-bit binary PPM through a
built-in codec.  A plain-text manifest lists sequence directories, one
per line.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError
from .fields import Frame

LOSSLESS_EXTENSIONS = {".png", ".bmp", ".ppm"}
LOSSY_EXTENSIONS = {".jpg", ".jpeg"}


def read_image(path, allow_lossy=False):
    """Load an image file as a float64 (H,W,3) array in [0,1]."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext in LOSSY_EXTENSIONS and not allow_lossy:
        raise FormatError(f"{path}: lossy format rejected (pass allow_lossy to override)")
    if ext == ".ppm":
        return _read_ppm(path)
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_image(path, pixels, bit_depth=8):
    """Write a float (H,W,3) array in [0,1] losslessly; 16-bit uses PPM."""
    path = Path(path)
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    if bit_depth == 16 or path.suffix.lower() == ".ppm":
        _write_ppm(path, arr, bit_depth)
        return
    if bit_depth != 8:
        raise FormatError(f"unsupported bit depth {bit_depth}")
    data = np.rint(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def _read_ppm(path):
    raw = path.read_bytes()
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise FormatError(f"{path}: not a binary P6 PPM file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval not in (255, 65535):
        raise FormatError(f"{path}: unsupported PPM maxval {maxval}")
    body = raw[m.end() :]
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    expected = w * h * 3 * dtype.itemsize if maxval == 65535 else w * h * 3
    if len(body) < expected:
        raise FormatError(f"{path}: truncated PPM payload")
    arr = np.frombuffer(body[:expected], dtype=dtype).reshape(h, w, 3)
    return arr.astype(np.float64) / maxval


def _write_ppm(path, arr, bit_depth):
    if bit_depth not in (8, 16):
        raise FormatError(f"unsupported PPM bit depth {bit_depth}")
    maxval = 255 if bit_depth == 8 else 65535
    data = np.rint(arr * maxval)
    h, w, _ = arr.shape
    header = f"P6\n{w} {h}\n{maxval}\n".encode()
    if bit_depth == 8:
        payload = data.astype(np.uint8).tobytes()
    else:
        payload = data.astype(">u2").tobytes()
    path.write_bytes(header + payload)


def _numeric_key(path):
    nums = re.findall(r"\d+", path.stem)
    return (int(nums[-1]) if nums else 0, path.name)


def list_sequence(directory, allow_lossy=False):
    """Numbered image files of one sequence directory, in frame order."""
    directory = Path(directory)
    allowed = LOSSLESS_EXTENSIONS | (LOSSY_EXTENSIONS if allow_lossy else set())
    files = [p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in allowed]
    return sorted(files, key=_numeric_key)


def read_sequence(directory, allow_lossy=False):
    """Load every frame of a sequence directory."""
    return [Frame(read_image(p, allow_lossy)) for p in list_sequence(directory, allow_lossy)]


def read_manifest(path):
    """Sequence directories listed one per line; blank lines and # comments skipped."""
    path = Path(path)
    dirs = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        entry = Path(line)
        if not entry.is_absolute():
            entry = path.parent / entry
        dirs.append(entry)
    return dirs


def write_manifest(path, directories):
    Path(path).write_text("".join(f"{d}\n" for d in directories))
