"""Binary checkpoint files: magic "WSDN", version 1.

Layout (all integers little-endian):
    magic b"WSDN" | u32 version | u32 metadata count
    per entry: u16 key length, key UTF-8, u16 value length, value UTF-8
    u32 tensor count
    per tensor: u16 name length, name UTF-8, u8 rank, rank x u32 dims,
                float64 payload

Writing the result of a load reproduces the file byte for byte: dicts keep
file order and values are stored as exact strings.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .models import ArchitectureSpec, Model, parameter_shapes

MAGIC = b"WSDN"
VERSION = 1

METADATA_KEYS = (
    "arch",
    "blockwise_skips",
    "global_pool_mode",
    "dims",
    "task",
    "digit",
    "seed",
    "init",
    "epoch",
    "val_loss",
)


@dataclass
class Checkpoint:
    metadata: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)

    def spec(self):
        m = self.metadata
        return ArchitectureSpec(
            m["arch"],
            dims=int(m["dims"]),
            blockwise_skips=m["blockwise_skips"] == "true",
            global_pool_mode=m["global_pool_mode"],
        )


def make_checkpoint(model, *, task, digit, seed, init, epoch, val_loss, tensors=None):
    """Snapshot a model with the standard metadata, in fixed key order."""
    spec = model.spec
    metadata = {
        "arch": spec.arch_id,
        "blockwise_skips": "true" if spec.blockwise_skips else "false",
        "global_pool_mode": spec.global_pool_mode,
        "dims": str(spec.dims),
        "task": task,
        "digit": str(digit),
        "seed": str(seed),
        "init": init,
        "epoch": str(epoch),
        "val_loss": repr(float(val_loss)),
    }
    if tensors is None:
        tensors = {name: t.values.copy() for name, t in model.params.items()}
    return Checkpoint(metadata=metadata, tensors=tensors)


def save_checkpoint(ckpt, path):
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(ckpt.metadata))
    for key, value in ckpt.metadata.items():
        kb, vb = key.encode(), str(value).encode()
        out += struct.pack("<H", len(kb)) + kb
        out += struct.pack("<H", len(vb)) + vb
    out += struct.pack("<I", len(ckpt.tensors))
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        nb = name.encode()
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(out)


class _Cursor:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ValueError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self):
        return self.take(1)[0]

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path):
    """Read and validate a checkpoint, including parameter shapes against
    the architecture its metadata declares."""
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read(), path)
    if cur.take(4) != MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    version = cur.u32()
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    metadata = {}
    for _ in range(cur.u32()):
        key = cur.take(cur.u16()).decode()
        metadata[key] = cur.take(cur.u16()).decode()
    tensors = {}
    for _ in range(cur.u32()):
        name = cur.take(cur.u16()).decode()
        rank = cur.u8()
        dims = tuple(cur.u32() for _ in range(rank))
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = cur.take(8 * n)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    if cur.pos != len(cur.data):
        raise ValueError(f"{path}: {len(cur.data) - cur.pos} trailing bytes")
    missing = [k for k in METADATA_KEYS if k not in metadata]
    if missing:
        raise ValueError(f"{path}: metadata missing {missing}")
    ckpt = Checkpoint(metadata=metadata, tensors=tensors)
    want = parameter_shapes(ckpt.spec())
    if set(want) != set(tensors) or any(
        tensors[name].shape != shape for name, shape in want.items()
    ):
        raise ValueError(f"{path}: tensors do not match architecture {metadata['arch']}")
    return ckpt


def checkpoint_to_model(ckpt):
    """Rebuild a Model whose parameters are the checkpoint tensors."""
    from .engine import Tensor

    params = {
        name: Tensor(arr.copy(), requires_grad=True) for name, arr in ckpt.tensors.items()
    }
    return Model(ckpt.spec(), params)
