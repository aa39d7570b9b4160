"""Framed control protocol spoken between broker and clients over TCP.

Every frame is ``[len:4 BE][op:1][body]`` where ``len`` counts the op byte
plus the body. PUB bodies carry ``[flags:1][seq:8 BE][topic_len:2 BE]
[topic][payload]``; flags bit 0 selects at-least-once delivery and bit 1
marks the message retained.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

__all__ = [
    "ProtocolError",
    "Envelope",
    "QOS_BEST_EFFORT",
    "QOS_AT_LEAST_ONCE",
    "OP_CONNECT",
    "OP_SUB",
    "OP_UNSUB",
    "OP_PUB",
    "OP_ACK",
    "OP_PING",
    "OP_PONG",
    "OP_NOTICE",
    "MAX_FRAME",
    "encode_frame",
    "encode_pub_body",
    "decode_pub_body",
    "encode_ack_body",
    "decode_ack_body",
    "recv_frame",
]

OP_CONNECT = 0x01
OP_SUB = 0x02
OP_UNSUB = 0x03
OP_PUB = 0x04
OP_ACK = 0x05
OP_PING = 0x06
OP_PONG = 0x07
OP_NOTICE = 0x08

_KNOWN_OPS = frozenset(
    (OP_CONNECT, OP_SUB, OP_UNSUB, OP_PUB, OP_ACK, OP_PING, OP_PONG, OP_NOTICE)
)

QOS_BEST_EFFORT = 0
QOS_AT_LEAST_ONCE = 1

MAX_FRAME = 1 << 20

_FLAG_QOS = 0x01
_FLAG_RETAIN = 0x02


class ProtocolError(Exception):
    """Malformed control frame."""


@dataclass(frozen=True)
class Envelope:
    """A published message as routed by the broker."""

    topic: str
    qos: int
    seq: int
    body: bytes
    retain: bool = False


def encode_frame(op: int, body: bytes = b"") -> bytes:
    return struct.pack(">IB", 1 + len(body), op) + body


def encode_pub_body(envelope: Envelope) -> bytes:
    flags = 0
    if envelope.qos == QOS_AT_LEAST_ONCE:
        flags |= _FLAG_QOS
    if envelope.retain:
        flags |= _FLAG_RETAIN
    topic = envelope.topic.encode()
    return (
        struct.pack(">BQH", flags, envelope.seq, len(topic)) + topic + envelope.body
    )


def decode_pub_body(body: bytes) -> Envelope:
    if len(body) < 11:
        raise ProtocolError("publish body too short")
    flags, seq, topic_len = struct.unpack(">BQH", body[:11])
    if len(body) < 11 + topic_len:
        raise ProtocolError("publish topic truncated")
    try:
        topic = body[11:11 + topic_len].decode()
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"topic is not valid UTF-8: {exc}")
    return Envelope(
        topic=topic,
        qos=QOS_AT_LEAST_ONCE if flags & _FLAG_QOS else QOS_BEST_EFFORT,
        seq=seq,
        body=body[11 + topic_len:],
        retain=bool(flags & _FLAG_RETAIN),
    )


def encode_ack_body(seq: int) -> bytes:
    return struct.pack(">Q", seq)


def decode_ack_body(body: bytes) -> int:
    if len(body) != 8:
        raise ProtocolError("ack body must be 8 bytes")
    return struct.unpack(">Q", body)[0]


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("connection closed")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> tuple[int, bytes]:
    """Read one complete frame; raises ProtocolError on malformed input."""
    (length,) = struct.unpack(">I", _recv_exact(sock, 4))
    if length < 1 or length > MAX_FRAME:
        raise ProtocolError(f"frame length {length} outside 1..{MAX_FRAME}")
    data = _recv_exact(sock, length)
    op = data[0]
    if op not in _KNOWN_OPS:
        raise ProtocolError(f"unknown op 0x{op:02X}")
    return op, data[1:]
