"""FPSH container: the on-disk format for shares, triple pools, models and commitments.

Layout (little-endian)::

    b"FPSH" | version:u8 | party:u8 | object_type:u8 | rows:u32 | cols:u32 | rows*cols x u64
"""

from __future__ import annotations

import enum
import struct
from pathlib import Path

import numpy as np

from .errors import BadContainer

MAGIC = b"FPSH"
VERSION = 1
_HEADER = struct.Struct("<4sBBBII")


class ObjectType(enum.IntEnum):
    SHARE = 1
    MATMUL = 2
    HADAMARD = 3
    CONVERSION = 4
    AND = 5
    EDABIT = 6
    ODD = 7
    ZERO = 8
    MODEL = 9
    COMMITMENT = 10


def pack(values: np.ndarray, party: int, object_type: ObjectType) -> bytes:
    values = np.asarray(values, dtype=np.uint64)
    if values.ndim == 0:
        values = values.reshape(1, 1)
    elif values.ndim == 1:
        values = values.reshape(1, -1)
    elif values.ndim > 2:
        values = values.reshape(values.shape[0], -1)
    rows, cols = values.shape
    head = _HEADER.pack(MAGIC, VERSION, party, int(object_type), rows, cols)
    return head + values.astype("<u8").tobytes()


def unpack(buf: bytes) -> tuple[np.ndarray, int, ObjectType]:
    if len(buf) < _HEADER.size:
        raise BadContainer("truncated FPSH header")
    magic, version, party, otype, rows, cols = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadContainer(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadContainer(f"unsupported FPSH version {version}")
    body = buf[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise BadContainer(f"payload is {len(body)} bytes, header says {rows}x{cols}")
    try:
        otype = ObjectType(otype)
    except ValueError:
        raise BadContainer(f"unknown object type {otype}") from None
    values = np.frombuffer(body, dtype="<u8").astype(np.uint64).reshape(rows, cols)
    return values, party, otype


def write(path, values, party: int, object_type: ObjectType) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pack(values, party, object_type))
    return path


def read(path, expect: ObjectType | None = None) -> tuple[np.ndarray, int, ObjectType]:
    values, party, otype = unpack(Path(path).read_bytes())
    if expect is not None and otype != expect:
        raise BadContainer(f"{path}: expected {expect.name}, found {otype.name}")
    return values, party, otype
