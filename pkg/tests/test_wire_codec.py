"""Codec tests: hand-packed golden vectors, round-trips, corruption rejection."""

import random

import pytest

from cdastack import wire_codec as wc

# -- independent oracle: string-of-bits packing, kept deliberately naive ------


def oracle_pack(fields):
    """fields: [(unsigned value, width)] -> zero-padded bytes, MSB-first."""
    bits = "".join(format(value, f"0{width}b") for value, width in fields)
    bits += "0" * (-len(bits) % 8)
    return bytes(int(bits[i:i + 8], 2) for i in range(0, len(bits), 8))


def oracle_crc16(data):
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


ADVISORY_GOLDEN = wc.AdvisoryPayload(
    advisory_id=1, segment_id=2, advisory_speed=1000,
    start_minute_of_year=0, duration_minutes=30, cause=1,
)
ADVISORY_GOLDEN_PAYLOAD = bytes.fromhex("0001" "0002" "1F40" "0000" "0078" "04")

BSM_GOLDEN = wc.BsmPayload(msg_cnt=0, temp_id=0)  # every other field unavailable
BSM_GOLDEN_PAYLOAD = bytes.fromhex(
    "00000000" "01FFFF" "AD274807" "5A4E9000" "0003FF" "FC2000"
)

TOLL_GOLDEN = wc.TollPayload(toll_point_id=0, amount_cents=0, currency=0, lane_mask=0)


# -- bit primitives -----------------------------------------------------------


def test_pack_uint_basic():
    cursor = wc.BitCursor()
    wc.pack_uint(cursor, 5, 7)
    assert cursor.bit_offset == 7
    assert cursor.to_bytes() == bytes([0b0000101_0])


def test_pack_uint_zero_width_13():
    cursor = wc.BitCursor()
    wc.pack_uint(cursor, 0, 13)
    assert cursor.bit_offset == 13
    assert cursor.to_bytes() == b"\x00\x00"


def test_pack_uint_all_ones_sentinel():
    cursor = wc.BitCursor()
    wc.pack_uint(cursor, 8191, 13)
    assert cursor.to_bytes() == oracle_pack([(8191, 13)])


def test_pack_uint_rejects_out_of_range():
    with pytest.raises(wc.PackingError):
        wc.pack_uint(wc.BitCursor(), 128, 7)
    with pytest.raises(wc.PackingError):
        wc.pack_uint(wc.BitCursor(), -1, 7)
    with pytest.raises(wc.PackingError):
        wc.pack_uint(wc.BitCursor(), 0, 0)
    with pytest.raises(wc.PackingError):
        wc.pack_uint(wc.BitCursor(), 0, 65)


def test_pack_read_roundtrip_random():
    rng = random.Random(7)
    for _ in range(200):
        fields = [
            (rng.randrange(1 << width), width)
            for width in (rng.randint(1, 64) for _ in range(rng.randint(1, 10)))
        ]
        cursor = wc.BitCursor()
        for value, width in fields:
            wc.pack_uint(cursor, value, width)
        assert cursor.to_bytes() == oracle_pack(fields)
        reader = wc.BitCursor.over(cursor.to_bytes())
        assert [wc.read_uint(reader, w) for _, w in fields] == [v for v, _ in fields]


def test_encode_offset_field():
    assert wc.encode_offset_field(370000000, 900000000, 31) == 1270000000
    assert wc.encode_offset_field(900000001, 900000000, 31) == 1800000001
    assert wc.encode_offset_field(-4096, 4096, 16) == 0
    with pytest.raises(wc.PackingError):
        wc.encode_offset_field(-4097, 4096, 16)
    with pytest.raises(wc.PackingError):
        wc.encode_offset_field(61440, 4096, 16)


# -- CRC ------------------------------------------------------------------------


def test_crc16_check_value():
    assert wc.crc16(b"123456789") == 0x29B1
    assert oracle_crc16(b"123456789") == 0x29B1


def test_crc16_empty_is_init():
    assert wc.crc16(b"") == 0xFFFF


def test_crc16_agrees_with_bitwise_oracle():
    rng = random.Random(99)
    for _ in range(100):
        data = bytes(rng.randrange(256) for _ in range(rng.randint(0, 64)))
        assert wc.crc16(data) == oracle_crc16(data)


def test_crc16_sensitive_to_single_bit_flips():
    for golden in (wc.encode_frame(ADVISORY_GOLDEN), wc.encode_frame(BSM_GOLDEN)):
        base = wc.crc16(golden)
        for byte_index in range(len(golden)):
            for bit in range(8):
                corrupted = bytearray(golden)
                corrupted[byte_index] ^= 1 << bit
                assert wc.crc16(bytes(corrupted)) != base


# -- golden vectors ---------------------------------------------------------------


def test_advisory_golden_payload():
    expected = oracle_pack(
        [(1, 16), (2, 16), (1000, 13), (0, 17), (30, 16), (1, 8)]
    )
    assert expected == ADVISORY_GOLDEN_PAYLOAD
    assert wc.encode_payload(ADVISORY_GOLDEN) == ADVISORY_GOLDEN_PAYLOAD
    assert len(ADVISORY_GOLDEN_PAYLOAD) == 11


def test_bsm_all_unavailable_golden():
    expected = oracle_pack(
        [
            (0, 7),
            (0, 32),
            (65535, 16),
            (900000001 + 900000000, 31),
            (1800000001 + 1799999999, 32),
            (-4096 + 4096, 16),
            (8191, 13),
            (28800, 15),
        ]
    )
    assert expected == BSM_GOLDEN_PAYLOAD
    assert wc.encode_payload(BSM_GOLDEN) == BSM_GOLDEN_PAYLOAD
    assert len(BSM_GOLDEN_PAYLOAD) == 21


def test_toll_all_zero_golden():
    assert wc.encode_payload(TOLL_GOLDEN) == b"\x00" * 6


def test_frame_layout_and_crc():
    frame = wc.encode_frame(ADVISORY_GOLDEN)
    assert frame[0] == wc.MSG_TYPE_ADVISORY
    assert frame[1:3] == (11).to_bytes(2, "big")
    assert frame[3:14] == ADVISORY_GOLDEN_PAYLOAD
    assert frame[14:] == oracle_crc16(frame[:14]).to_bytes(2, "big")
    assert len(frame) == 11 + 5


def test_frame_sizes():
    assert len(wc.encode_frame(BSM_GOLDEN)) == 21 + 5
    assert len(wc.encode_frame(ADVISORY_GOLDEN)) == 11 + 5
    assert len(wc.encode_frame(TOLL_GOLDEN)) == 6 + 5


def test_encode_deterministic():
    a = wc.encode_frame(ADVISORY_GOLDEN)
    b = wc.encode_frame(
        wc.AdvisoryPayload(
            advisory_id=1, segment_id=2, advisory_speed=1000,
            start_minute_of_year=0, duration_minutes=30, cause=1,
        )
    )
    assert a == b


# -- random round-trips --------------------------------------------------------


def random_bsm(rng):
    return wc.BsmPayload(
        msg_cnt=rng.randint(0, 127),
        temp_id=rng.randint(0, 2**32 - 1),
        sec_mark=rng.choice([rng.randint(0, 60999), 65535]),
        lat=rng.choice([rng.randint(-900000000, 900000000), 900000001]),
        lon=rng.choice([rng.randint(-1799999999, 1800000000), 1800000001]),
        elev=rng.choice([rng.randint(-4095, 61439), -4096]),
        speed=rng.choice([rng.randint(0, 8190), 8191]),
        heading=rng.choice([rng.randint(0, 28799), 28800]),
    )


def random_advisory(rng):
    return wc.AdvisoryPayload(
        advisory_id=rng.randint(0, 65535),
        segment_id=rng.randint(0, 65535),
        advisory_speed=rng.choice([rng.randint(0, 8190), 8191]),
        start_minute_of_year=rng.choice([rng.randint(0, 131070), wc.START_IMMEDIATE]),
        duration_minutes=rng.randint(0, 65535),
        cause=rng.randint(0, 4),
    )


def random_toll(rng):
    return wc.TollPayload(
        toll_point_id=rng.randint(0, 65535),
        amount_cents=rng.randint(0, 65535),
        currency=0,
        lane_mask=rng.randint(0, 255),
    )


@pytest.mark.parametrize("make", [random_bsm, random_advisory, random_toll])
def test_roundtrip_10k_random_messages(make):
    rng = random.Random(20240042)
    for _ in range(10_000):
        message = make(rng)
        frame_bytes = wc.encode_frame(message)
        _, decoded = wc.decode_frame(frame_bytes)
        assert decoded == message


# -- rejection ------------------------------------------------------------------


def test_decode_short_buffer():
    with pytest.raises(wc.ShortBufferError):
        wc.decode_frame(wc.encode_frame(ADVISORY_GOLDEN)[:3])
    with pytest.raises(wc.ShortBufferError):
        wc.decode_frame(b"")


def test_decode_unknown_type():
    frame = bytearray(wc.encode_frame(ADVISORY_GOLDEN))
    frame[0] = 99
    with pytest.raises(wc.UnknownMessageTypeError):
        wc.decode_frame(bytes(frame))


def test_decode_length_mismatch():
    frame = bytearray(wc.encode_frame(ADVISORY_GOLDEN))
    frame[2] = 12
    with pytest.raises(wc.LengthMismatchError):
        wc.decode_frame(bytes(frame))
    with pytest.raises(wc.LengthMismatchError):
        wc.decode_frame(wc.encode_frame(ADVISORY_GOLDEN) + b"\x00")


def test_decode_crc_mismatch():
    frame = bytearray(wc.encode_frame(ADVISORY_GOLDEN))
    frame[-1] ^= 0x01
    with pytest.raises(wc.CrcMismatchError):
        wc.decode_frame(bytes(frame))


def test_decode_nonzero_padding():
    payload = bytearray(ADVISORY_GOLDEN_PAYLOAD)
    payload[-1] |= 0x01  # lowest two bits are padding
    head = bytes([wc.MSG_TYPE_ADVISORY, 0, 11])
    body = head + bytes(payload)
    frame = body + wc.crc16(body).to_bytes(2, "big")
    with pytest.raises(wc.PaddingError):
        wc.decode_frame(frame)


def test_decode_out_of_range_field():
    bad = [(1, 16), (2, 16), (1000, 13), (0, 17), (30, 16), (9, 8)]  # cause 9
    payload = oracle_pack(bad)
    head = bytes([wc.MSG_TYPE_ADVISORY, 0, 11])
    body = head + payload
    frame = body + wc.crc16(body).to_bytes(2, "big")
    with pytest.raises(wc.FieldRangeError):
        wc.decode_frame(frame)


def test_encode_rejects_out_of_range_naming_field():
    bad = wc.AdvisoryPayload(
        advisory_id=1, segment_id=2, advisory_speed=9000,
        start_minute_of_year=0, duration_minutes=30, cause=1,
    )
    with pytest.raises(wc.FieldRangeError) as exc_info:
        wc.encode_frame(bad)
    assert exc_info.value.field_name == "advisory_speed"
    assert "advisory_speed" in str(exc_info.value)


def test_single_byte_corruption_never_decodes_silently():
    """Any single-byte corruption is caught by some typed decode error."""
    rng = random.Random(5)
    for message in (ADVISORY_GOLDEN, BSM_GOLDEN, TOLL_GOLDEN):
        golden = wc.encode_frame(message)
        for _ in range(300):
            corrupted = bytearray(golden)
            index = rng.randrange(len(corrupted))
            delta = rng.randint(1, 255)
            corrupted[index] = (corrupted[index] + delta) % 256
            with pytest.raises(wc.DecodeError):
                wc.decode_frame(bytes(corrupted))


def test_frame_type_codes():
    assert wc.MSG_TYPE_BSM == 20
    assert wc.MSG_TYPE_ADVISORY == 31
    assert wc.MSG_TYPE_TOLL == 240
