"""Named parameter store and the binary checkpoint format.

Checkpoint layout: magic b"CJTV", format version u16, then per record
(name length u16, name bytes, rank u8, one u32 per dim, float32 LE
payload), closed by a CRC32 of everything before it. Records are written
in sorted name order so save -> load -> save is byte-identical.

Parameters live quantized to float32 (compute happens in float64 on
exact float32 values), which keeps checkpoints compact and resume
bit-exact.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, NumericFault
from .tensor import Tensor

MAGIC = b"CJTV"
FORMAT_VERSION = 1

META_PREFIX = "__meta__/"


def _quantize(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float32).astype(np.float64)


class ParamStore:
    """Learnable tensors keyed by path-style names, plus optimizer slots."""

    def __init__(self) -> None:
        self.params: dict[str, Tensor] = {}
        self.opt_m: dict[str, np.ndarray] = {}
        self.opt_v: dict[str, np.ndarray] = {}
        self.opt_t: dict[str, int] = {}
        self.meta: dict[str, np.ndarray] = {}

    def register(self, name: str, values: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered")
        if name.startswith("__"):
            raise ValueError("parameter names must not start with '__'")
        t = Tensor(_quantize(np.asarray(values, dtype=np.float64)), name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None

    def check_finite(self) -> None:
        for name, t in self.params.items():
            if not np.all(np.isfinite(t.data)):
                raise NumericFault(f"parameter {name!r} went non-finite")

    def clone_values(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def save(self, path: str | Path) -> None:
        records: list[tuple[str, np.ndarray]] = []
        for name in sorted(self.params):
            records.append((name, self.params[name].data))
        for name in sorted(self.opt_m):
            records.append((f"__opt_m__/{name}", self.opt_m[name]))
        for name in sorted(self.opt_v):
            records.append((f"__opt_v__/{name}", self.opt_v[name]))
        for name in sorted(self.opt_t):
            records.append((f"__opt_t__/{name}",
                            np.array([self.opt_t[name]], dtype=np.float64)))
        for name in sorted(self.meta):
            records.append((META_PREFIX + name, self.meta[name]))

        blob = bytearray()
        blob += MAGIC
        blob += struct.pack("<H", FORMAT_VERSION)
        for name, arr in records:
            encoded = name.encode("utf-8")
            a32 = np.ascontiguousarray(arr, dtype="<f4")
            blob += struct.pack("<H", len(encoded))
            blob += encoded
            blob += struct.pack("<B", a32.ndim)
            for d in a32.shape:
                blob += struct.pack("<I", d)
            blob += a32.tobytes()
        blob += struct.pack("<I", zlib.crc32(bytes(blob)))
        Path(path).write_bytes(bytes(blob))

    @classmethod
    def load(cls, path: str | Path) -> "ParamStore":
        raw = Path(path).read_bytes()
        if len(raw) < 10 or raw[:4] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        body, crc_bytes = raw[:-4], raw[-4:]
        if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(body):
            raise CheckpointError(f"{path}: CRC mismatch, file corrupt")
        version = struct.unpack_from("<H", body, 4)[0]
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")

        store = cls()
        at = 6
        while at < len(body):
            (nlen,) = struct.unpack_from("<H", body, at)
            at += 2
            name = body[at:at + nlen].decode("utf-8")
            at += nlen
            (rank,) = struct.unpack_from("<B", body, at)
            at += 1
            dims = []
            for _ in range(rank):
                (d,) = struct.unpack_from("<I", body, at)
                dims.append(d)
                at += 4
            count = int(np.prod(dims)) if dims else 1
            arr = np.frombuffer(body, dtype="<f4", count=count, offset=at)
            at += 4 * count
            values = arr.astype(np.float64).reshape(dims)
            if name.startswith("__opt_m__/"):
                store.opt_m[name[len("__opt_m__/"):]] = values
            elif name.startswith("__opt_v__/"):
                store.opt_v[name[len("__opt_v__/"):]] = values
            elif name.startswith("__opt_t__/"):
                store.opt_t[name[len("__opt_t__/"):]] = int(values[0])
            elif name.startswith(META_PREFIX):
                store.meta[name[len(META_PREFIX):]] = values
            else:
                t = Tensor(values, name=name)
                store.params[name] = t
        return store

    def set_meta_bytes(self, key: str, payload: bytes) -> None:
        self.meta[key] = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)

    def get_meta_bytes(self, key: str) -> bytes | None:
        if key not in self.meta:
            return None
        return bytes(self.meta[key].astype(np.uint8))

    def set_meta_int(self, key: str, value: int) -> None:
        self.meta[key] = np.array([float(value)], dtype=np.float64)

    def get_meta_int(self, key: str, default: int = 0) -> int:
        if key not in self.meta:
            return default
        return int(self.meta[key][0])
