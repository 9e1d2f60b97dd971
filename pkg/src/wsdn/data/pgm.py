"""Binary PGM (P5) export for score fields."""

import numpy as np


def write_pgm(path, field):
    """Min-max scale a 2D field onto 0..255 and write a binary PGM.

    A constant field writes all zeros. Returns the uint8 pixels written.
    """
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("PGM export needs a 2D field")
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        pixels = np.rint((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pixels = np.zeros(arr.shape, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return pixels


def read_pgm(path):
    """Read a binary PGM with maxval 255 back into a (H, W) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos, fields = 0, []
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        begin = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if begin == pos:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(data[begin:pos])
    pos += 1
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    pixels = np.frombuffer(data[pos : pos + w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise ValueError(f"{path}: truncated PGM payload")
    return pixels.reshape(h, w)
