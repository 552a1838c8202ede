"""The ``IRBN`` binary container used for packed models and training checkpoints.

Layout (all integers little-endian)::

    magic          4 bytes  b"IRBN"
    version        u16
    file kind      u8       0 = packed model, 1 = checkpoint
    descriptor     u32 length + UTF-8 JSON (architecture, input shape, metadata, state)
    record count   u32
    records        repeated:
        kind tag       u8
        name           u16 length + UTF-8
        array count    u8
        arrays         repeated:
            name       u8 length + UTF-8
            dtype      u8   (see DTYPES)
            ndim       u8
            shape      u32 * ndim
            payload    raw little-endian data, product(shape) * itemsize bytes

Records are written depth-first: a residual record is followed by its body
records, and carries the number of children in its ``children`` array.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"IRBN"
VERSION = 1
KIND_PACKED = 0
KIND_CHECKPOINT = 1

DTYPES = {1: "<f4", 2: "<f8", 3: "<u8", 4: "<i4", 5: "<i8"}
DTYPE_CODES = {np.dtype(v).str: k for k, v in DTYPES.items()}

LAYER_TAGS = {
    "binary_conv": 1,
    "binary_linear": 2,
    "fp_conv": 3,
    "fp_linear": 4,
    "batchnorm": 5,
    "hardtanh": 6,
    "maxpool": 7,
    "avgpool": 8,
    "flatten": 9,
    "residual": 10,
    "optimizer": 32,
}
TAG_KINDS = {v: k for k, v in LAYER_TAGS.items()}


class _Writer:
    def __init__(self):
        self.buf = io.BytesIO()

    def raw(self, b):
        self.buf.write(b)

    def u8(self, v):
        self.raw(struct.pack("<B", v))

    def u16(self, v):
        self.raw(struct.pack("<H", v))

    def u32(self, v):
        self.raw(struct.pack("<I", v))

    def text(self, s, width):
        b = s.encode("utf-8")
        {1: self.u8, 2: self.u16, 4: self.u32}[width](len(b))
        self.raw(b)

    def array(self, name, a):
        a = np.asarray(a)
        code = DTYPE_CODES.get(a.dtype.newbyteorder("<").str)
        if code is None:
            raise FormatError(f"unsupported dtype {a.dtype} for array {name!r}")
        self.text(name, 1)
        self.u8(code)
        self.u8(a.ndim)
        for d in a.shape:
            self.u32(d)
        self.raw(np.ascontiguousarray(a, dtype=DTYPES[code]).tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", offset=self.pos)
        b = self.data[self.pos : self.pos + n]
        self.pos += n
        return b

    def u8(self, what="u8"):
        return struct.unpack("<B", self.take(1, what))[0]

    def u16(self, what="u16"):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what="u32"):
        return struct.unpack("<I", self.take(4, what))[0]

    def text(self, width, what):
        n = {1: self.u8, 2: self.u16, 4: self.u32}[width](what)
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"invalid UTF-8 in {what}", offset=self.pos - n) from exc

    def array(self):
        name = self.text(1, "array name")
        at = self.pos
        code = self.u8("dtype")
        if code not in DTYPES:
            raise FormatError(f"unknown dtype code {code} for array {name!r}", offset=at)
        ndim = self.u8("ndim")
        shape = tuple(self.u32("shape") for _ in range(ndim))
        dt = np.dtype(DTYPES[code])
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(count * dt.itemsize, f"payload of {name!r}")
        return name, np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))


def write_container(kind: int, descriptor: dict, records) -> bytes:
    """``records`` is a sequence of ``(kind_name, name, {array_name: array})``."""
    w = _Writer()
    w.raw(MAGIC)
    w.u16(VERSION)
    w.u8(kind)
    w.text(json.dumps(descriptor, sort_keys=True, separators=(",", ":")), 4)
    records = list(records)
    w.u32(len(records))
    for rkind, name, arrays in records:
        w.u8(LAYER_TAGS[rkind])
        w.text(name, 2)
        w.u8(len(arrays))
        for aname in sorted(arrays):
            w.array(aname, arrays[aname])
    return w.buf.getvalue()


def read_container(data: bytes, expected_kind=None):
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic: expected {MAGIC!r}, found {magic!r}", offset=0)
    version = r.u16("version")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version} (expected {VERSION})", offset=4)
    kind = r.u8("file kind")
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f"file kind {kind}, expected {expected_kind}", offset=6)
    at = r.pos
    try:
        descriptor = json.loads(r.text(4, "descriptor"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"descriptor is not valid JSON: {exc}", offset=at) from exc
    records = []
    for _ in range(r.u32("record count")):
        at = r.pos
        tag = r.u8("record tag")
        if tag not in TAG_KINDS:
            raise FormatError(f"unknown record tag {tag}", offset=at)
        name = r.text(2, "record name")
        arrays = dict(r.array() for _ in range(r.u8("array count")))
        records.append((TAG_KINDS[tag], name, arrays))
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes", offset=r.pos)
    return kind, descriptor, records


def file_kind(path) -> int:
    head = Path(path).read_bytes()[:7]
    if len(head) < 7 or head[:4] != MAGIC:
        raise FormatError(f"{path}: not an IRBN file", offset=0)
    return head[6]
