"""Binary tensor container shared by weight files and dataset files.

Layout (all integers little-endian)::

    magic   4 bytes   b"VITW"
    version u16       currently 1
    count   u32       number of tensors
    then, per tensor:
        name_len u32, name (UTF-8, name_len bytes)
        rank     u32, dims (rank x u32)
        payload  prod(dims) x f32, little-endian

Tensors are written in the order given and read back into an ordered dict.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"VITW"
VERSION = 1

_HEADER = struct.Struct("<4sHI")
_U32 = struct.Struct("<I")


class ModelFormatError(ValueError):
    """A tensor container is malformed, truncated, or inconsistent with its config."""


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        raw_name = name.encode("utf-8")
        parts.append(_U32.pack(len(raw_name)))
        parts.append(raw_name)
        parts.append(_U32.pack(arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_tensors(buf: bytes) -> dict[str, np.ndarray]:
    if len(buf) < _HEADER.size:
        raise ModelFormatError("file too short for header")
    magic, version, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic bytes {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    pos = _HEADER.size
    out: dict[str, np.ndarray] = {}
    for index in range(count):
        label = f"tensor #{index}"
        try:
            (name_len,) = _U32.unpack_from(buf, pos)
            pos += 4
            if pos + name_len > len(buf):
                raise ModelFormatError(f"truncated name of {label}")
            name = buf[pos : pos + name_len].decode("utf-8")
            label = f"tensor {name!r}"
            pos += name_len
            (rank,) = _U32.unpack_from(buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
        except struct.error as exc:
            raise ModelFormatError(f"truncated header of {label}") from exc
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"name of {label} is not valid UTF-8") from exc
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(buf):
            raise ModelFormatError(
                f"{label} truncated: expected {nbytes} payload bytes, found {len(buf) - pos}"
            )
        if name in out:
            raise ModelFormatError(f"duplicate {label}")
        arr = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos)
        out[name] = arr.astype(np.float32).reshape(dims)
        pos += nbytes
    if pos != len(buf):
        raise ModelFormatError(f"{len(buf) - pos} trailing bytes after last tensor")
    return out


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write ``data`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_tensors(path: str | os.PathLike, tensors: Mapping[str, np.ndarray]) -> None:
    atomic_write_bytes(path, encode_tensors(tensors))


def read_tensors(path: str | os.PathLike) -> dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())
