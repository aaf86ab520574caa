"""Reader and writer for the NPY array container holding roll datasets.

Datasets are stored as one ``N x 64 x 84`` array: ``uint8`` for binary data,
``float32`` for generated data. The reader also accepts the common variants
found in the wild (a single ``64 x 84`` roll, a trailing or leading singleton
channel axis, boolean or float64 payloads, format versions 1.0 to 3.0).
"""

from __future__ import annotations

import ast
import struct

import numpy as np

from ..errors import BadMagic, NonBinaryValues, ShapeMismatch
from .rolls import PITCHES, TIME_STEPS

MAGIC = b"\x93NUMPY"
_ALIGN = 64

_DTYPES = {
    "|u1": np.uint8, "u1": np.uint8, "<u1": np.uint8,
    "|b1": np.bool_, "b1": np.bool_,
    "|i1": np.int8, "<i8": np.int64, "<i4": np.int32,
    "<f4": np.float32, "<f8": np.float64,
    ">f4": np.dtype(">f4"), ">f8": np.dtype(">f8"),
}


def _header_text(descr: str, shape: tuple[int, ...]) -> bytes:
    shape_txt = "(" + ", ".join(str(d) for d in shape) + ("," if len(shape) == 1 else "") + ")"
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (descr, shape_txt)
    # magic(6) + version(2) + length(2) + text + newline must be a multiple of 64
    pad = -(len(MAGIC) + 4 + len(text) + 1) % _ALIGN
    return (text + " " * pad + "\n").encode("latin1")


def write_npy(path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array)
    if arr.dtype == np.uint8:
        descr = "|u1"
    elif arr.dtype == np.float32:
        descr = "<f4"
        arr = arr.astype("<f4", copy=False)
    else:
        raise TypeError(f"unsupported dtype {arr.dtype}; use uint8 or float32")
    header = _header_text(descr, arr.shape)
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\x01\x00" + struct.pack("<H", len(header)))
        fh.write(header)
        fh.write(arr.tobytes(order="C"))


def read_npy(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:6] != MAGIC:
        raise BadMagic(f"{path}: not an NPY file (magic {data[:6]!r})")
    major = data[6]
    if major == 1:
        (hlen,) = struct.unpack("<H", data[8:10])
        start = 10
    elif major in (2, 3):
        (hlen,) = struct.unpack("<I", data[8:12])
        start = 12
    else:
        raise BadMagic(f"{path}: unsupported NPY version {major}.{data[7]}")
    try:
        header = ast.literal_eval(data[start:start + hlen].decode("latin1" if major < 3 else "utf8"))
        descr, fortran, shape = header["descr"], header["fortran_order"], tuple(header["shape"])
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise BadMagic(f"{path}: unreadable NPY header") from exc
    if not isinstance(descr, str) or descr not in _DTYPES:
        raise ShapeMismatch(f"{path}: unsupported element type {descr!r}")
    dtype = np.dtype(_DTYPES[descr])
    count = int(np.prod(shape, dtype=np.int64))
    payload = data[start + hlen:]
    if len(payload) < count * dtype.itemsize:
        raise ShapeMismatch(f"{path}: payload shorter than declared shape {shape}")
    arr = np.frombuffer(payload, dtype=dtype, count=count)
    return arr.reshape(shape, order="F" if fortran else "C")


def _as_roll_stack(arr: np.ndarray, where) -> np.ndarray:
    shape = arr.shape
    if shape == (TIME_STEPS, PITCHES):
        return arr[None]
    if arr.ndim == 4 and shape[1:] == (TIME_STEPS, PITCHES, 1):
        return arr[..., 0]
    if arr.ndim == 4 and shape[1] == 1 and shape[2:] == (TIME_STEPS, PITCHES):
        return arr[:, 0]
    if arr.ndim == 3 and shape[1:] == (TIME_STEPS, PITCHES):
        return arr
    raise ShapeMismatch(f"{where}: expected N x 64 x 84 rolls, got shape {shape}")


def load_dataset(path, binary: bool | None = None) -> np.ndarray:
    """Load rolls as an ``N x 64 x 84`` array.

    ``binary=True`` demands 0/1 content and returns ``uint8``; ``binary=False``
    returns ``float32``; ``None`` keeps integer and boolean payloads as binary
    (checked) and floating payloads as ``float32``.
    """
    raw = _as_roll_stack(read_npy(path), path)
    if binary is None:
        binary = raw.dtype.kind in "biu"
    if binary:
        if not np.isin(raw, (0, 1)).all():
            raise NonBinaryValues(f"{path}: expected binary rolls")
        return raw.astype(np.uint8)
    return np.ascontiguousarray(raw, dtype=np.float32)


def save_dataset(rolls, path) -> None:
    """Write rolls as ``uint8`` when every entry is 0 or 1, else as ``float32``."""
    arr = np.asarray(rolls)
    if arr.ndim == 2:
        arr = arr[None]
    arr = _as_roll_stack(arr, "rolls")
    if np.isin(arr, (0, 1)).all():
        write_npy(path, arr.astype(np.uint8))
    else:
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError("roll values must lie in [0, 1]")
        write_npy(path, arr.astype(np.float32))
