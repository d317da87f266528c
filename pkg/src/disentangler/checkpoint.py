"""Binary model checkpoints with integrity checking.

Layout: 8-byte magic, u32 format version, u64 JSON-header length, the
header (architecture, training config echo, seed, anything the caller
stashes), then one record per tensor — u32 name length, name, u32 rank,
u64 dims, u64 payload length, float64 little-endian data — and a trailing
SHA-256 over everything before it.  All integers little-endian.  Tensors
are written in sorted name order, so equal parameters give equal bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .networks import ModelParams, NetworkSpec

MAGIC = b"DSNTCKPT"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Unreadable checkpoint: wrong magic/version, corruption, truncation."""


def save_checkpoint(path, params: ModelParams,
                    extra: dict | None = None) -> str:
    """Write parameters plus a JSON header; returns the hex checksum."""
    header = {
        "network": params.spec.to_dict(),
        "seed": params.seed,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<Q", len(header_bytes))
    out += header_bytes
    for name in sorted(params.tensors):
        tensor = np.ascontiguousarray(params.tensors[name],
                                      dtype="<f8")
        name_bytes = name.encode("utf-8")
        out += struct.pack("<I", len(name_bytes))
        out += name_bytes
        out += struct.pack("<I", tensor.ndim)
        out += struct.pack(f"<{tensor.ndim}Q", *tensor.shape)
        payload = tensor.tobytes()
        out += struct.pack("<Q", len(payload))
        out += payload
    digest = hashlib.sha256(bytes(out)).digest()
    out += digest
    Path(path).write_bytes(bytes(out))
    return digest.hex()


class _Reader:
    def __init__(self, blob: bytes, what: str):
        self.blob = blob
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"{self.what}: truncated at byte {self.pos} "
                f"(wanted {n} more)")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Read a checkpoint; returns (params, header dict).

    Verifies magic, exact version match, and the trailing SHA-256 before
    trusting any tensor bytes.
    """
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4 + 8 + 32:
        raise CheckpointError(f"{path}: too short to be a checkpoint")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt file)")
    r = _Reader(body, str(path))
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version}, this build reads only "
            f"{FORMAT_VERSION}")
    header = json.loads(r.take(r.u64()).decode("utf-8"))
    spec = NetworkSpec.from_dict(header["network"])
    tensors: dict[str, np.ndarray] = {}
    while r.pos < len(body):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        payload = r.take(r.u64())
        arr = np.frombuffer(payload, dtype="<f8").reshape(shape)
        tensors[name] = arr.astype(np.float64)
    params = ModelParams(spec, tensors, int(header.get("seed", 0)))
    return params, header


def checkpoint_checksum(path) -> str:
    """Hex SHA-256 stored in the file's trailer."""
    blob = Path(path).read_bytes()
    if len(blob) < 32:
        raise CheckpointError(f"{path}: too short to be a checkpoint")
    return blob[-32:].hex()
