"""Image/sequence I/O: lossless codecs, manifests, ordering."""

import numpy as np
import pytest

from deinterlace import imgio
from deinterlace.errors import FormatError


def test_png_roundtrip_8bit(tmp_path, rng):
    img = np.round(rng.random((6, 5, 3)) * 255) / 255
    p = tmp_path / "a.png"
    imgio.write_image(p, img)
    np.testing.assert_allclose(imgio.read_image(p), img, atol=1e-9)


def test_ppm_roundtrip_16bit(tmp_path, rng):
    img = np.round(rng.random((6, 5, 3)) * 65535) / 65535
    p = tmp_path / "a.ppm"
    imgio.write_image(p, img, bit_depth=16)
    np.testing.assert_allclose(imgio.read_image(p), img, atol=1e-9)


def test_lossy_rejected_by_default(tmp_path):
    p = tmp_path / "a.jpg"
    p.write_bytes(b"\xff\xd8\xff\xe0 fake")
    with pytest.raises(FormatError):
        imgio.read_image(p)


def test_bad_ppm_rejected(tmp_path):
    p = tmp_path / "bad.ppm"
    p.write_bytes(b"P3\n2 2\n255\n")
    with pytest.raises(FormatError):
        imgio.read_image(p)
    p.write_bytes(b"P6\n4 4\n255\n\x00\x01")  # truncated
    with pytest.raises(FormatError):
        imgio.read_image(p)


def test_sequence_numeric_ordering(tmp_path, rng):
    img = rng.random((4, 4, 3))
    for name in ("frame_10.png", "frame_2.png", "frame_1.png"):
        imgio.write_image(tmp_path / name, img)
    names = [p.name for p in imgio.list_sequence(tmp_path)]
    assert names == ["frame_1.png", "frame_2.png", "frame_10.png"]


def test_manifest_roundtrip(tmp_path):
    dirs = [tmp_path / "s1", tmp_path / "s2"]
    m = tmp_path / "manifest.txt"
    imgio.write_manifest(m, dirs)
    assert imgio.read_manifest(m) == dirs


def test_manifest_relative_and_comments(tmp_path):
    m = tmp_path / "manifest.txt"
    m.write_text("# comment\n\nrelseq\n")
    assert imgio.read_manifest(m) == [tmp_path / "relseq"]
