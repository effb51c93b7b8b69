import math
import struct

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from vapbench.pipeline.encoding import (
    EncodingError,
    Message,
    apply_bit_flip,
    bit_length,
    decode_payload,
    encode_payload,
    locate_bit,
    pack_values,
    schema,
    slot_bit_index,
    slot_offsets,
    unpack_values,
)

MIXED = schema(("a", "real64"), ("b", "int32"), ("c", "bool"), ("d", "real64"), ("e", "int32"))

real64 = st.floats(allow_nan=False)
int32 = st.integers(-(2**31), 2**31 - 1)


def test_real64_one_layout():
    sch = schema(("v", "real64"))
    bits = encode_payload(Message("t", 0, sch, (1.0,)))
    assert bit_length(sch) == 64
    assert bits.hex() == "3ff0000000000000"


def test_int32_minus_one_layout():
    sch = schema(("v", "int32"))
    assert pack_values(sch, (-1,)).hex() == "ffffffff"


def test_bool_is_one_byte():
    sch = schema(("f", "bool"))
    assert bit_length(sch) == 8
    assert pack_values(sch, (True,)) == b"\x01"


def test_bit_length_is_sum_of_widths():
    assert bit_length(MIXED) == 64 + 32 + 8 + 64 + 32


@given(real64, int32, st.booleans(), real64, int32)
def test_mixed_round_trip(a, b, c, d, e):
    msg = Message("topic", 3, MIXED, (a, b, c, d, e))
    bits = encode_payload(msg)
    back = decode_payload(bits, MIXED, "topic", 3)
    assert back == msg
    assert encode_payload(back) == bits


@given(st.binary(min_size=25, max_size=25))
def test_bits_round_trip(raw):
    # bool bytes other than 0/1 are not canonical, so force them
    raw = bytearray(raw)
    raw[12] &= 1
    raw = bytes(raw)
    values = unpack_values(MIXED, raw)
    assume(not any(isinstance(v, float) and math.isnan(v) for v in values))
    assert pack_values(MIXED, values) == raw


def test_nan_payload_round_trips_bitwise():
    sch = schema(("v", "real64"))
    raw = bytes.fromhex("7ff8000000000123")
    assert pack_values(sch, unpack_values(sch, raw)) == raw


def test_slot_offsets_are_schema_only():
    offs = slot_offsets(MIXED)
    assert offs == (136, 104, 96, 32, 0)
    # value changes never move bits
    assert slot_bit_index(MIXED, 0, 63) == 199
    for slot, f in enumerate(MIXED):
        for bit in (0, f.kind.width - 1):
            assert locate_bit(MIXED, slot_bit_index(MIXED, slot, bit)) == (slot, bit)


def test_sign_bit_of_lone_real64():
    sch = schema(("v", "real64"))
    flipped = apply_bit_flip(pack_values(sch, (1.0,)), slot_bit_index(sch, 0, 63))
    assert unpack_values(sch, flipped) == (-1.0,)


def test_width_mismatch_rejected():
    with pytest.raises(EncodingError):
        pack_values(MIXED, (1.0, 2))
    with pytest.raises(EncodingError):
        unpack_values(MIXED, b"\x00" * 3)


def test_unknown_kind_rejected():
    with pytest.raises(EncodingError):
        schema(("v", "float16"))


def test_bit_outside_slot_rejected():
    with pytest.raises(EncodingError):
        slot_bit_index(MIXED, 1, 32)


def test_big_endian_matches_struct():
    assert pack_values(MIXED, (1.5, 7, True, -2.0, -3)) == struct.pack(">di?di", 1.5, 7, True, -2.0, -3)


def test_nominal_flag():
    sch = schema(("mode", "int32", "nominal"), ("x", "real64"), ("f", "bool"))
    assert [f.interval for f in sch] == [False, True, False]
