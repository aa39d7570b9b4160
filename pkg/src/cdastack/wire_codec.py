"""Bit-exact encoder/decoder for the constrained V2X message subset.

Three fixed-size messages (vehicle state broadcast, advisory speed, toll)
are packed MSB-first into zero-padded payloads and carried in a
CRC-protected frame::

    [msg_type:1][payload_len:2 BE][payload][crc16:2 BE]

The CRC is CRC-16/CCITT-FALSE over everything before the CRC field.
Signed fields are shifted by a per-field offset before packing so every
wire value is an unsigned integer. Encodings are canonical: padding bits
must be zero and are rejected on decode, so equal messages always yield
byte-identical frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields as dc_fields

__all__ = [
    "CodecError",
    "PackingError",
    "FieldRangeError",
    "DecodeError",
    "ShortBufferError",
    "UnknownMessageTypeError",
    "LengthMismatchError",
    "CrcMismatchError",
    "PaddingError",
    "BitCursor",
    "pack_uint",
    "read_uint",
    "encode_offset_field",
    "decode_offset_field",
    "crc16",
    "BsmPayload",
    "AdvisoryPayload",
    "TollPayload",
    "MessageFrame",
    "encode_payload",
    "decode_payload",
    "encode_frame",
    "decode_frame",
    "MSG_TYPE_BSM",
    "MSG_TYPE_ADVISORY",
    "MSG_TYPE_TOLL",
]


class CodecError(Exception):
    """Base class for every codec failure."""


class PackingError(CodecError):
    """A raw packing primitive was used outside its contract."""


class FieldRangeError(CodecError):
    """A message field is outside its valid range and not a sentinel."""

    def __init__(self, field_name, value, lo, hi, sentinel=None):
        self.field_name = field_name
        self.value = value
        self.lo = lo
        self.hi = hi
        self.sentinel = sentinel
        allowed = f"[{lo}, {hi}]"
        if sentinel is not None:
            allowed += f" or sentinel {sentinel}"
        super().__init__(f"field {field_name!r} value {value} outside {allowed}")


class DecodeError(CodecError):
    """Base class for frame/payload decoding failures."""


class ShortBufferError(DecodeError):
    pass


class UnknownMessageTypeError(DecodeError):
    pass


class LengthMismatchError(DecodeError):
    pass


class CrcMismatchError(DecodeError):
    pass


class PaddingError(DecodeError):
    pass


# -- CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor ----

def _build_crc_table():
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE of ``data``; crc16(b"") == 0xFFFF."""
    crc = 0xFFFF
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ byte]
    return crc


# -- Bit-level cursor --------------------------------------------------------

@dataclass
class BitCursor:
    """Byte buffer with a bit offset; writes append MSB-first."""

    buffer: bytearray = field(default_factory=bytearray)
    bit_offset: int = 0

    @classmethod
    def over(cls, data: bytes) -> "BitCursor":
        """Cursor positioned at the start of existing bytes, for reading."""
        return cls(buffer=bytearray(data), bit_offset=0)

    def to_bytes(self) -> bytes:
        return bytes(self.buffer)


def pack_uint(cursor: BitCursor, value: int, width: int) -> BitCursor:
    """Append ``value`` as ``width`` bits, most-significant bit first."""
    if not 1 <= width <= 64:
        raise PackingError(f"width {width} outside 1..64")
    if value < 0 or value >> width:
        raise PackingError(f"value {value} does not fit in {width} bits")
    remaining = width
    while remaining > 0:
        byte_index = cursor.bit_offset // 8
        if byte_index == len(cursor.buffer):
            cursor.buffer.append(0)
        free = 8 - (cursor.bit_offset % 8)
        take = min(free, remaining)
        chunk = (value >> (remaining - take)) & ((1 << take) - 1)
        cursor.buffer[byte_index] |= chunk << (free - take)
        cursor.bit_offset += take
        remaining -= take
    return cursor


def read_uint(cursor: BitCursor, width: int) -> int:
    """Consume ``width`` bits from the cursor, MSB-first."""
    if not 1 <= width <= 64:
        raise PackingError(f"width {width} outside 1..64")
    if cursor.bit_offset + width > 8 * len(cursor.buffer):
        raise ShortBufferError(
            f"need {width} bits at offset {cursor.bit_offset}, "
            f"buffer has {8 * len(cursor.buffer)}"
        )
    value = 0
    remaining = width
    while remaining > 0:
        byte_index = cursor.bit_offset // 8
        free = 8 - (cursor.bit_offset % 8)
        take = min(free, remaining)
        chunk = (cursor.buffer[byte_index] >> (free - take)) & ((1 << take) - 1)
        value = (value << take) | chunk
        cursor.bit_offset += take
        remaining -= take
    return value


def encode_offset_field(value: int, offset: int, width: int) -> int:
    """Shift a signed field into the unsigned wire domain."""
    raw = value + offset
    if raw < 0 or raw >> width:
        raise PackingError(
            f"value {value} with offset {offset} outside [0, 2^{width})"
        )
    return raw


def decode_offset_field(raw: int, offset: int) -> int:
    return raw - offset


# -- Message definitions -----------------------------------------------------

MSG_TYPE_BSM = 20
MSG_TYPE_ADVISORY = 31
MSG_TYPE_TOLL = 240

# Unavailable / cancel sentinels (values on the signed, pre-offset side).
SEC_MARK_UNAVAILABLE = 65535
LAT_UNAVAILABLE = 900000001
LON_UNAVAILABLE = 1800000001
ELEV_UNAVAILABLE = -4096
SPEED_UNAVAILABLE = 8191
HEADING_UNAVAILABLE = 28800
ADVISORY_SPEED_CANCEL = 8191
# The start field is 17 bits wide, so the largest encodable value doubles
# as the "starts immediately" sentinel.
START_IMMEDIATE = 131071

SPEED_UNITS_MPS = 0.02
HEADING_UNITS_DEG = 0.0125

ADVISORY_CAUSES = {
    0: "none",
    1: "congestion",
    2: "incident",
    3: "weather",
    4: "workzone",
}
ADVISORY_CAUSE_CODES = {name: code for code, name in ADVISORY_CAUSES.items()}


@dataclass(frozen=True)
class _FieldSpec:
    name: str
    width: int
    offset: int
    lo: int
    hi: int
    sentinel: int | None = None

    def check(self, value):
        if not isinstance(value, int) or isinstance(value, bool):
            raise FieldRangeError(self.name, value, self.lo, self.hi, self.sentinel)
        if self.lo <= value <= self.hi:
            return
        if self.sentinel is not None and value == self.sentinel:
            return
        raise FieldRangeError(self.name, value, self.lo, self.hi, self.sentinel)


@dataclass(frozen=True)
class BsmPayload:
    """Periodic vehicle state broadcast (position, speed, heading)."""

    msg_cnt: int
    temp_id: int
    sec_mark: int = SEC_MARK_UNAVAILABLE
    lat: int = LAT_UNAVAILABLE
    lon: int = LON_UNAVAILABLE
    elev: int = ELEV_UNAVAILABLE
    speed: int = SPEED_UNAVAILABLE
    heading: int = HEADING_UNAVAILABLE


@dataclass(frozen=True)
class AdvisoryPayload:
    """Operator advisory speed for one road segment."""

    advisory_id: int
    segment_id: int
    advisory_speed: int
    start_minute_of_year: int = START_IMMEDIATE
    duration_minutes: int = 0
    cause: int = 0


@dataclass(frozen=True)
class TollPayload:
    """Toll charge notice for a tolling point."""

    toll_point_id: int
    amount_cents: int
    currency: int = 0
    lane_mask: int = 0


@dataclass(frozen=True)
class MessageFrame:
    msg_type: int
    payload: bytes
    crc: int


_BSM_FIELDS = (
    _FieldSpec("msg_cnt", 7, 0, 0, 127),
    _FieldSpec("temp_id", 32, 0, 0, 2**32 - 1),
    _FieldSpec("sec_mark", 16, 0, 0, 60999, SEC_MARK_UNAVAILABLE),
    _FieldSpec("lat", 31, 900000000, -900000000, 900000000, LAT_UNAVAILABLE),
    _FieldSpec("lon", 32, 1799999999, -1799999999, 1800000000, LON_UNAVAILABLE),
    _FieldSpec("elev", 16, 4096, -4095, 61439, ELEV_UNAVAILABLE),
    _FieldSpec("speed", 13, 0, 0, 8190, SPEED_UNAVAILABLE),
    _FieldSpec("heading", 15, 0, 0, 28799, HEADING_UNAVAILABLE),
)

_ADVISORY_FIELDS = (
    _FieldSpec("advisory_id", 16, 0, 0, 65535),
    _FieldSpec("segment_id", 16, 0, 0, 65535),
    _FieldSpec("advisory_speed", 13, 0, 0, 8190, ADVISORY_SPEED_CANCEL),
    _FieldSpec("start_minute_of_year", 17, 0, 0, 131070, START_IMMEDIATE),
    _FieldSpec("duration_minutes", 16, 0, 0, 65535),
    _FieldSpec("cause", 8, 0, 0, 4),
)

_TOLL_FIELDS = (
    _FieldSpec("toll_point_id", 16, 0, 0, 65535),
    _FieldSpec("amount_cents", 16, 0, 0, 65535),
    _FieldSpec("currency", 8, 0, 0, 0),
    _FieldSpec("lane_mask", 8, 0, 0, 255),
)

_MESSAGES = {
    MSG_TYPE_BSM: (BsmPayload, _BSM_FIELDS, 21),
    MSG_TYPE_ADVISORY: (AdvisoryPayload, _ADVISORY_FIELDS, 11),
    MSG_TYPE_TOLL: (TollPayload, _TOLL_FIELDS, 6),
}

_TYPE_BY_CLASS = {cls: msg_type for msg_type, (cls, _, _) in _MESSAGES.items()}

PAYLOAD_SIZES = {msg_type: size for msg_type, (_, _, size) in _MESSAGES.items()}


def message_type_of(message) -> int:
    try:
        return _TYPE_BY_CLASS[type(message)]
    except KeyError:
        raise CodecError(f"not an encodable message: {type(message).__name__}")


def encode_payload(message) -> bytes:
    """Pack a payload dataclass into its fixed-size zero-padded bytes."""
    msg_type = message_type_of(message)
    _, specs, size = _MESSAGES[msg_type]
    cursor = BitCursor()
    for spec in specs:
        value = getattr(message, spec.name)
        spec.check(value)
        pack_uint(cursor, encode_offset_field(value, spec.offset, spec.width), spec.width)
    payload = cursor.to_bytes()
    if len(payload) < size:
        payload += bytes(size - len(payload))
    return payload


def decode_payload(msg_type: int, payload: bytes):
    """Unpack payload bytes, enforcing ranges and zero padding."""
    if msg_type not in _MESSAGES:
        raise UnknownMessageTypeError(f"unknown message type {msg_type}")
    cls, specs, size = _MESSAGES[msg_type]
    if len(payload) != size:
        raise LengthMismatchError(
            f"type {msg_type} payload must be {size} bytes, got {len(payload)}"
        )
    cursor = BitCursor.over(payload)
    values = {}
    for spec in specs:
        raw = read_uint(cursor, spec.width)
        value = decode_offset_field(raw, spec.offset)
        spec.check(value)
        values[spec.name] = value
    pad_bits = 8 * size - cursor.bit_offset
    if pad_bits and read_uint(cursor, pad_bits) != 0:
        raise PaddingError(f"{pad_bits} padding bits are not zero")
    return cls(**values)


def encode_frame(message) -> bytes:
    """Encode a payload dataclass into a complete CRC-protected frame."""
    msg_type = message_type_of(message)
    payload = encode_payload(message)
    head = struct.pack(">BH", msg_type, len(payload))
    return head + payload + struct.pack(">H", crc16(head + payload))


def decode_frame(data: bytes):
    """Decode frame bytes into ``(MessageFrame, payload dataclass)``.

    Raises a distinct :class:`DecodeError` subclass per failure mode;
    arbitrary input never decodes silently to a wrong message.
    """
    if len(data) < 5:
        raise ShortBufferError(f"frame needs at least 5 bytes, got {len(data)}")
    msg_type, declared = struct.unpack(">BH", data[:3])
    if msg_type not in _MESSAGES:
        raise UnknownMessageTypeError(f"unknown message type {msg_type}")
    expected = PAYLOAD_SIZES[msg_type]
    if declared != expected:
        raise LengthMismatchError(
            f"type {msg_type} declares {declared} payload bytes, expected {expected}"
        )
    total = 3 + declared + 2
    if len(data) < total:
        raise ShortBufferError(f"frame truncated: {len(data)} of {total} bytes")
    if len(data) > total:
        raise LengthMismatchError(f"{len(data) - total} trailing bytes after frame")
    payload = data[3:3 + declared]
    (received_crc,) = struct.unpack(">H", data[3 + declared:total])
    computed = crc16(data[:3 + declared])
    if received_crc != computed:
        raise CrcMismatchError(
            f"crc mismatch: frame carries 0x{received_crc:04X}, computed 0x{computed:04X}"
        )
    decoded = decode_payload(msg_type, payload)
    return MessageFrame(msg_type=msg_type, payload=payload, crc=received_crc), decoded


def payload_fields(message) -> dict:
    """Field name/value mapping, in wire order (for display tools)."""
    return {f.name: getattr(message, f.name) for f in dc_fields(message)}
