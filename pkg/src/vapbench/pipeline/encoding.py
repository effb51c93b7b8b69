"""Canonical bit layout for node messages.

Slots are concatenated in declaration order. ``real64`` is IEEE-754 binary64
big-endian, ``int32`` is two's-complement big-endian and ``bool`` is a single
byte. The whole payload is treated as one big-endian integer, so bit ``0`` is
the least significant bit of the last byte; for a lone ``real64`` slot bit 63
is the sign bit.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence


class ScalarKind(str, Enum):
    REAL64 = "real64"
    INT32 = "int32"
    BOOL = "bool"

    @property
    def width(self) -> int:
        return _WIDTH[self]


_WIDTH = {ScalarKind.REAL64: 64, ScalarKind.INT32: 32, ScalarKind.BOOL: 8}
_FMT = {ScalarKind.REAL64: "d", ScalarKind.INT32: "i", ScalarKind.BOOL: "?"}


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    label: str
    kind: ScalarKind
    nominal: bool = False  # categorical value (mode, index, bitmask): no meaningful mean

    @property
    def interval(self) -> bool:
        """True for quantities where distances and averages make sense."""
        return not self.nominal and self.kind is not ScalarKind.BOOL


Schema = tuple  # tuple[Field, ...]


def schema(*pairs: tuple) -> Schema:
    """Build a schema from ``(label, kind)`` pairs; a third element ``"nominal"``
    marks a categorical slot."""
    out = []
    for label, kind, *flags in pairs:
        try:
            out.append(Field(label, ScalarKind(kind), "nominal" in flags))
        except ValueError:
            raise EncodingError(f"unknown scalar kind {kind!r} for slot {label!r}") from None
    return tuple(out)


def repeated(prefix: str, count: int, fields: Sequence[tuple[str, str]]) -> list[tuple[str, str]]:
    """Expand ``count`` copies of a record into flat slot pairs (``p0.x``, ``p0.z``, ...)."""
    return [(f"{prefix}{i}.{name}", kind) for i in range(count) for name, kind in fields]


@lru_cache(maxsize=None)
def _struct_for(sch: Schema) -> struct.Struct:
    return struct.Struct(">" + "".join(_FMT[f.kind] for f in sch))


def bit_length(sch: Schema) -> int:
    return sum(f.kind.width for f in sch)


@lru_cache(maxsize=None)
def slot_offsets(sch: Schema) -> tuple[int, ...]:
    """Payload bit index of bit 0 (the LSB) of every slot."""
    total = bit_length(sch)
    offsets = []
    prefix = 0
    for f in sch:
        prefix += f.kind.width
        offsets.append(total - prefix)
    return tuple(offsets)


def slot_bit_index(sch: Schema, slot: int, bit: int) -> int:
    width = sch[slot].kind.width
    if not 0 <= bit < width:
        raise EncodingError(f"bit {bit} outside slot {sch[slot].label!r} of width {width}")
    return slot_offsets(sch)[slot] + bit


def locate_bit(sch: Schema, index: int) -> tuple[int, int]:
    """Inverse of :func:`slot_bit_index`: payload bit -> (slot, bit within slot)."""
    for slot, off in enumerate(slot_offsets(sch)):
        if off <= index < off + sch[slot].kind.width:
            return slot, index - off
    raise EncodingError(f"bit {index} outside payload of width {bit_length(sch)}")


def _normalize(kind: ScalarKind, value):
    if kind is ScalarKind.REAL64:
        return float(value)
    if kind is ScalarKind.INT32:
        v = int(value)
        if not -(2**31) <= v < 2**31:
            raise EncodingError(f"int32 value {v} out of range")
        return v
    return bool(value)


def pack_values(sch: Schema, values: Sequence) -> bytes:
    if len(values) != len(sch):
        raise EncodingError(f"width mismatch: {len(values)} values for {len(sch)} slots")
    try:
        return _struct_for(sch).pack(*values)
    except struct.error:
        return _struct_for(sch).pack(*(_normalize(f.kind, v) for f, v in zip(sch, values)))


def unpack_values(sch: Schema, bits: bytes) -> tuple:
    st = _struct_for(sch)
    if len(bits) != st.size:
        raise EncodingError(f"width mismatch: {len(bits) * 8} bits for a {st.size * 8}-bit schema")
    return st.unpack(bits)


@dataclass(frozen=True)
class Message:
    topic: str
    seq: int
    schema: Schema
    values: tuple

    def value(self, label: str):
        for f, v in zip(self.schema, self.values):
            if f.label == label:
                return v
        raise KeyError(label)

    def as_dict(self) -> dict:
        return {f.label: v for f, v in zip(self.schema, self.values)}


def encode_payload(msg: Message) -> bytes:
    return pack_values(msg.schema, msg.values)


def decode_payload(bits: bytes, sch: Schema, topic: str = "", seq: int = 0) -> Message:
    """Decode a payload. Bool bytes decode as ``byte != 0``."""
    return Message(topic, seq, sch, unpack_values(sch, bits))


def apply_bit_flip(bits: bytes, index: int, mode: str = "flip") -> bytes:
    """Flip, clear or set one bit; ``index`` counts from the payload LSB."""
    n = len(bits) * 8
    if not 0 <= index < n:
        raise IndexError(f"bit index {index} out of range for {n}-bit payload")
    buf = bytearray(bits)
    pos = len(buf) - 1 - index // 8
    mask = 1 << (index % 8)
    if mode == "flip":
        buf[pos] ^= mask
    elif mode == "set0":
        buf[pos] &= ~mask & 0xFF
    elif mode == "set1":
        buf[pos] |= mask
    else:
        raise ValueError(f"unknown fault mode {mode!r}")
    return bytes(buf)


def values_close(a: Iterable, b: Iterable, eps: float) -> bool:
    """True when every slot pair differs by at most ``eps`` (NaN never matches)."""
    for x, y in zip(a, b):
        if x == y:
            continue
        d = abs(float(x) - float(y))
        if math.isnan(d) or d > eps:
            return False
    return True
