"""TCP broker behavior: routing, ordering, retained messages, resilience."""

import socket
import struct
import time

import pytest

from cdastack.transport.broker import Broker
from cdastack.transport.client import BrokerClient, DeliveryError
from cdastack.transport.protocol import (
    QOS_AT_LEAST_ONCE,
    QOS_BEST_EFFORT,
    encode_frame,
    OP_CONNECT,
)


def connect(broker, client_id, **kwargs):
    return BrokerClient("127.0.0.1", broker.port, client_id, **kwargs)


def drain(client, n, timeout=5.0):
    out = []
    deadline = time.monotonic() + timeout
    while len(out) < n and time.monotonic() < deadline:
        try:
            out.append(client.messages.get(timeout=0.2))
        except Exception:
            pass
    return out


def test_publish_subscribe_ordering(broker):
    sub = connect(broker, "sub")
    sub.subscribe("cda/fl/veh/+/bsm")
    time.sleep(0.05)
    pub = connect(broker, "pub")
    for i in range(100):
        pub.publish("cda/fl/veh/7/bsm", f"m{i}".encode(), qos=QOS_AT_LEAST_ONCE)
    pub.flush()
    received = drain(sub, 100)
    assert [e.body for e in received] == [f"m{i}".encode() for i in range(100)]
    pub.close()
    sub.close()


def test_retained_message_replays_to_late_subscriber(broker):
    pub = connect(broker, "pub")
    handle = pub.publish(
        "cda/fl/adv/12", b"advisory-frame", qos=QOS_AT_LEAST_ONCE, retain=True
    )
    assert handle.wait(2.0)
    late = connect(broker, "late")
    late.subscribe("cda/fl/adv/#")
    messages = drain(late, 1)
    assert len(messages) == 1
    assert messages[0].body == b"advisory-frame"
    assert messages[0].topic == "cda/fl/adv/12"
    assert messages[0].retain
    pub.close()
    late.close()


def test_publish_with_no_subscribers_is_accepted(broker):
    pub = connect(broker, "pub")
    handle = pub.publish("cda/fl/adv/99", b"x", qos=QOS_AT_LEAST_ONCE)
    assert handle.wait(2.0)
    assert pub.ping() < 1.0
    pub.close()


def test_best_effort_returns_immediately(broker):
    pub = connect(broker, "pub")
    started = time.monotonic()
    assert pub.publish("t", b"x", qos=QOS_BEST_EFFORT) is None
    assert time.monotonic() - started < 0.1
    pub.close()


def test_publish_on_closed_connection_raises(broker):
    pub = connect(broker, "pub")
    pub.close()
    with pytest.raises((ConnectionError, OSError)):
        pub.publish("t", b"x")


def test_at_least_once_retries_then_fails_without_broker_ack():
    # A silent server: accepts the connection, never ACKs anything.
    silent = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    silent.bind(("127.0.0.1", 0))
    silent.listen(1)
    port = silent.getsockname()[1]
    client = BrokerClient(
        "127.0.0.1", port, "pub", ack_timeout=0.05, max_attempts=3
    )
    conn, _ = silent.accept()
    handle = client.publish("t", b"x", qos=QOS_AT_LEAST_ONCE)
    with pytest.raises(DeliveryError):
        assert handle.wait(3.0)
    assert handle.attempts == 3
    client.close()
    conn.close()
    silent.close()


def test_malformed_frames_do_not_crash_broker(broker):
    sub = connect(broker, "sub")
    sub.subscribe("ok/#")
    time.sleep(0.05)

    # A zoo of garbage: bad lengths, bad ops, truncated bodies, random bytes.
    attacks = [
        b"\x00\x00\x00\x00",                      # zero length
        struct.pack(">I", 1 << 30) + b"\xff",     # absurd length
        struct.pack(">IB", 1, 0xEE),              # unknown op
        struct.pack(">IB", 5, 0x04) + b"\x01",    # truncated PUB body
        b"\xde\xad\xbe\xef\xde\xad\xbe\xef",
        encode_frame(OP_CONNECT, b"again"),        # CONNECT as non-first frame
    ]
    for attack in attacks:
        rogue = socket.create_connection(("127.0.0.1", broker.port))
        rogue.sendall(encode_frame(OP_CONNECT, b"rogue"))
        try:
            rogue.sendall(attack)
            time.sleep(0.02)
        except OSError:
            pass
        rogue.close()

    pub = connect(broker, "pub")
    handle = pub.publish("ok/1", b"still-alive", qos=QOS_AT_LEAST_ONCE)
    assert handle.wait(2.0)
    assert [e.body for e in drain(sub, 1)] == [b"still-alive"]
    assert broker.stats.malformed_disconnects >= 1
    pub.close()
    sub.close()


def test_slow_consumer_overflow_disconnect():
    broker = Broker(port=0, queue_limit=8).start()
    try:
        # Raw subscriber that never reads: its queue must overflow.
        lazy = socket.create_connection(("127.0.0.1", broker.port))
        lazy.sendall(encode_frame(OP_CONNECT, b"lazy"))
        lazy.sendall(encode_frame(0x02, b"flood/#"))
        time.sleep(0.05)
        # Shrink the OS buffers so backpressure reaches the broker queue fast.
        lazy.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1024)

        pub = BrokerClient("127.0.0.1", broker.port, "pub")
        big = bytes(4096)
        for i in range(5000):
            pub.publish("flood/x", big)
        deadline = time.monotonic() + 5.0
        while (
            broker.stats.overflow_disconnects == 0 and time.monotonic() < deadline
        ):
            time.sleep(0.05)
        assert broker.stats.overflow_disconnects >= 1
        pub.close()
        lazy.close()
    finally:
        broker.stop()


def test_bind_failure_raises():
    first = Broker(port=0).start()
    try:
        with pytest.raises(OSError):
            Broker(port=first.port).start()
    finally:
        first.stop()


def test_two_publishers_interleaved_each_fifo(broker):
    sub = connect(broker, "sub")
    sub.subscribe("t/#")
    time.sleep(0.05)
    pub_a = connect(broker, "a")
    pub_b = connect(broker, "b")
    for i in range(50):
        pub_a.publish("t/a", f"a{i}".encode(), qos=QOS_AT_LEAST_ONCE)
        pub_b.publish("t/b", f"b{i}".encode(), qos=QOS_AT_LEAST_ONCE)
    pub_a.flush()
    pub_b.flush()
    received = drain(sub, 100)
    per_topic = {"t/a": [], "t/b": []}
    for envelope in received:
        per_topic[envelope.topic].append(envelope.body)
    assert per_topic["t/a"] == [f"a{i}".encode() for i in range(50)]
    assert per_topic["t/b"] == [f"b{i}".encode() for i in range(50)]
    for c in (pub_a, pub_b, sub):
        c.close()
