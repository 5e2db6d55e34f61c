"""Binary checkpoint format.

Layout (all integers little-endian):

    magic   4 bytes  b"MACO"
    version u32      currently 1
    u64 + bytes      config JSON
    u64 + bytes      meta JSON (epoch, optimizer step, RNG state)
    u32              number of arrays
    per array:       u16 name length, name utf-8, u8 rank, u64 dims...,
                     float64 little-endian values

Saving and loading is exact: float64 values round-trip bit for bit, so a
restored model reproduces forward outputs identically.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import CheckpointError

MAGIC = b"MACO"
VERSION = 1


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f8")
    name_b = name.encode()
    head = struct.pack("<H", len(name_b)) + name_b + struct.pack("<B", data.ndim)
    head += struct.pack(f"<{data.ndim}Q", *data.shape) if data.ndim else b""
    return head + data.tobytes()


def save_checkpoint(
    path,
    config: RunConfig,
    parameters: dict[str, np.ndarray],
    optimizer_arrays: dict[str, np.ndarray],
    epoch: int,
    optimizer_step: int,
    rng_state: dict,
) -> None:
    meta = {"epoch": epoch, "optimizer_step": optimizer_step, "rng_state": rng_state}
    blobs = [MAGIC, struct.pack("<I", VERSION)]
    for payload in (config.to_json().encode(), json.dumps(meta).encode()):
        blobs.append(struct.pack("<Q", len(payload)))
        blobs.append(payload)
    arrays = {f"param.{k}": v for k, v in parameters.items()}
    arrays.update({f"opt.{k}": v for k, v in optimizer_arrays.items()})
    blobs.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        blobs.append(_pack_array(name, arr))
    Path(path).write_bytes(b"".join(blobs))


class LoadedCheckpoint:
    def __init__(self, config: RunConfig, meta: dict, arrays: dict[str, np.ndarray]):
        self.config = config
        self.meta = meta
        self.arrays = arrays

    @property
    def parameters(self) -> dict[str, np.ndarray]:
        return {k[len("param."):]: v for k, v in self.arrays.items() if k.startswith("param.")}

    @property
    def optimizer_arrays(self) -> dict[str, np.ndarray]:
        return {k[len("opt."):]: v for k, v in self.arrays.items() if k.startswith("opt.")}


def load_checkpoint(path) -> LoadedCheckpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unknown checkpoint version {version} (supported: {VERSION})")
    pos = 8

    def read_blob() -> bytes:
        nonlocal pos
        (n,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        blob = raw[pos : pos + n]
        pos += n
        return blob

    config = RunConfig.from_json(read_blob().decode())
    meta = json.loads(read_blob().decode())
    (n_arrays,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos : pos + name_len].decode()
        pos += name_len
        (rank,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}Q", raw, pos) if rank else ()
        pos += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(dims)
        pos += 8 * count
        arrays[name] = arr.astype(np.float64)
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return LoadedCheckpoint(config=config, meta=meta, arrays=arrays)
