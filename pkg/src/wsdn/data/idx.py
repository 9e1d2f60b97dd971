"""IDX array files (the classic MNIST container), plain or gzipped."""

import gzip
import math
import struct

import numpy as np

MAGIC_BY_RANK = {3: 0x00000803, 1: 0x00000801}
_RANK_BY_MAGIC = {magic: rank for rank, magic in MAGIC_BY_RANK.items()}


def _read_bytes(path):
    # sniff the gzip signature instead of trusting the file extension
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(fh) as gz:
                return gz.read()
        return fh.read()


def load_idx(path):
    """Read an unsigned-byte IDX file into a uint8 array.

    Big-endian u32 magic (0x00000803 for rank-3 image stacks, 0x00000801 for
    rank-1 label vectors), big-endian u32 dimension sizes, raw bytes.
    """
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    rank = _RANK_BY_MAGIC.get(magic)
    if rank is None:
        raise ValueError(f"{path}: bad IDX magic 0x{magic:08x}")
    header = 4 + 4 * rank
    if len(raw) < header:
        raise ValueError(f"{path}: truncated IDX dimension list")
    dims = struct.unpack(f">{rank}I", raw[4:header])
    expected = math.prod(dims)
    payload = raw[header:]
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload holds {len(payload)} bytes, dimensions say {expected}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def save_idx(path, array):
    """Write a uint8 array of rank 1 or 3 as a plain IDX file."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    magic = MAGIC_BY_RANK.get(arr.ndim)
    if magic is None:
        raise ValueError(f"IDX rank {arr.ndim} unsupported (rank 1 or 3 only)")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())
