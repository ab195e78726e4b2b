"""Binary serialization for parameter sets and datasets.

Layout: magic "AFM1", 32-byte sha256 config hash, u32 record count; then
per record: u32 name length, utf-8 name, u32 rank, u64 dims, raw float64
little-endian values. Round trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import ConfigError

MAGIC = b"AFM1"


def config_hash(text: str) -> bytes:
    return hashlib.sha256(text.encode("utf-8")).digest()


def write_arrays(path, arrays: dict[str, np.ndarray], cfg_hash: bytes = b""):
    cfg_hash = (cfg_hash or b"\x00" * 32)[:32].ljust(32, b"\x00")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(cfg_hash)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<Q", d))
            f.write(arr.tobytes())


def read_arrays(path) -> tuple[dict[str, np.ndarray], bytes]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ConfigError(f"{path}: bad magic, not a checkpoint file")
    cfg_hash = data[4:36]
    (count,) = struct.unpack_from("<I", data, 36)
    offset = 40
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, offset)
        offset += 4
        name = data[offset:offset + nlen].decode("utf-8")
        offset += nlen
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}Q", data, offset) if rank else ()
        offset += 8 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(dims)
        offset += 8 * n
        arrays[name] = arr.copy()
    return arrays, cfg_hash
