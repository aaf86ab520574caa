"""Binary container used for classifier models and transfer-model checkpoints.

Layout (all integers little-endian)::

    magic      8 bytes   b"ROLLGAN\\x00"
    version    uint16    FORMAT_VERSION
    hlen       uint32    length of the JSON header
    header     hlen      UTF-8 JSON: {"kind", "meta", "arrays": [{name, dtype, shape, offset, nbytes}]}
    payload    ...       raw C-order array bytes, concatenated in header order
    crc32      uint32    CRC-32 of every preceding byte

The encoding is canonical (sorted JSON keys, fixed array order), so identical
content always produces identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from typing import Any, Mapping

import numpy as np

from .errors import CorruptCheckpoint

MAGIC = b"ROLLGAN\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")


def dumps(kind: str, meta: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, value in arrays.items():
        arr = np.ascontiguousarray(value)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Decode a container, returning ``(meta, arrays)``."""
    if len(data) < _PREFIX.size + 4:
        raise CorruptCheckpoint("file too short to be a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CorruptCheckpoint(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CorruptCheckpoint(
            f"unsupported checkpoint version {version} (this build reads version {FORMAT_VERSION})")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptCheckpoint("checksum mismatch (truncated or corrupted file)")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + hlen])
    except ValueError as exc:
        raise CorruptCheckpoint("unreadable header") from exc
    if kind is not None and header.get("kind") != kind:
        raise CorruptCheckpoint(f"expected a {kind!r} container, found {header.get('kind')!r}")
    payload = data[start + hlen:-4]
    arrays = {}
    for e in header["arrays"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise CorruptCheckpoint(f"array {e['name']!r} is truncated")
        arrays[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header["meta"], arrays


def save(path, kind: str, meta: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(kind, meta, arrays))


def load(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        return loads(fh.read(), kind)


def peek_kind(path) -> str:
    meta_kind = None
    with open(path, "rb") as fh:
        prefix = fh.read(_PREFIX.size)
        if len(prefix) == _PREFIX.size:
            magic, _, hlen = _PREFIX.unpack(prefix)
            if magic == MAGIC:
                try:
                    meta_kind = json.loads(fh.read(hlen)).get("kind")
                except ValueError:
                    pass
    if meta_kind is None:
        raise CorruptCheckpoint(f"{path} is not a checkpoint container")
    return meta_kind
