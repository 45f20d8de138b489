"""Versioned binary container shared by feature matrices and checkpoints.

Layout (all integers little-endian)::

    magic    4 bytes
    version  uint16
    hlen     uint32
    header   hlen bytes of UTF-8 JSON
    payload  little-endian float64 tensors, row-major, back to back

The header carries a ``tensors`` directory of ``{name, shape, offset}``
entries (offset counted in float64 elements) and the payload length, which the
reader checks before decoding.
"""
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from intentforge.errors import FormatError

VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_LE_F64 = np.dtype("<f8")


def atomic_write(path, data: bytes):
    """Write via ``<path>.partial`` and rename, so a crash never leaves a truncated file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def encode(magic: bytes, header: dict, tensors: dict) -> bytes:
    directory, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype=_LE_F64)
        directory.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    payload = b"".join(chunks)
    header = dict(header)
    header["tensors"] = directory
    header["payload_length"] = offset
    header["payload_sha256"] = hashlib.sha256(payload).hexdigest()
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(magic, VERSION, len(blob)) + blob + payload


def decode(data: bytes, magic: bytes):
    if len(data) < _PREFIX.size:
        raise FormatError("file too short for a container prefix")
    got, version, hlen = _PREFIX.unpack_from(data)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    if version > VERSION:
        raise FormatError(f"container version {version} is newer than supported {VERSION}")
    try:
        header = json.loads(data[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt header: {exc}") from None
    payload = data[_PREFIX.size + hlen:]
    n = header.get("payload_length", -1)
    if len(payload) != 8 * n:
        raise FormatError(f"payload holds {len(payload)} bytes, header promises {8 * n}")
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise FormatError("payload checksum mismatch")
    flat = np.frombuffer(payload, dtype=_LE_F64).astype(np.float64)
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        tensors[entry["name"]] = flat[entry["offset"]:entry["offset"] + size].reshape(shape).copy()
    return header, tensors


def write(path, magic, header, tensors):
    atomic_write(path, encode(magic, header, tensors))


def read(path, magic):
    return decode(Path(path).read_bytes(), magic)
