"""Binary PGM (P5) image I/O: 8-bit for corpus images, 16-bit for score maps."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InputError


def write_pgm8(path, image01: np.ndarray) -> None:
    """Write a [0, 1] float image as an 8-bit binary PGM."""
    img = np.clip(np.asarray(image01, dtype=np.float64), 0.0, 1.0)
    data = np.round(img * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def write_pgm16(path, values: np.ndarray) -> None:
    """Write an arbitrary float map as a min-max scaled 16-bit binary PGM."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    data = np.round(scaled * 65535.0).astype(">u2")  # PGM 16-bit is big-endian
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into floats scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise InputError(f"{path}: not a binary PGM (P5) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":  # comment line
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval == 255:
        data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    elif maxval == 65535:
        data = np.frombuffer(raw, dtype=">u2", count=w * h, offset=pos)
    else:
        raise InputError(f"{path}: unsupported PGM maxval {maxval}")
    return data.reshape(h, w).astype(np.float64) / maxval
