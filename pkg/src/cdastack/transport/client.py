"""Broker client: publish with optional at-least-once retransmission,
pattern subscriptions, and a background reader thread.

At-least-once publishes are tracked until the broker acknowledges the
sequence number; unacknowledged frames are retransmitted (default every
250 ms, 5 attempts) and surface a :class:`DeliveryError` when retries are
exhausted. Best-effort publishes are fire-and-forget.
"""

from __future__ import annotations

import queue
import socket
import threading
import time

from . import protocol
from .protocol import (
    Envelope,
    OP_ACK,
    OP_CONNECT,
    OP_NOTICE,
    OP_PING,
    OP_PONG,
    OP_PUB,
    OP_SUB,
    OP_UNSUB,
    QOS_AT_LEAST_ONCE,
    QOS_BEST_EFFORT,
)

__all__ = ["BrokerClient", "DeliveryError", "PublishHandle"]

DEFAULT_ACK_TIMEOUT = 0.25
DEFAULT_MAX_ATTEMPTS = 5


class DeliveryError(Exception):
    """An at-least-once publish exhausted its retransmission budget."""


class PublishHandle:
    """Tracks one at-least-once publish until ACK or failure."""

    def __init__(self, seq: int, frame: bytes):
        self.seq = seq
        self.frame = frame
        self.attempts = 1
        self.deadline = 0.0
        self._done = threading.Event()
        self._error = None

    def _resolve(self, error=None):
        self._error = error
        self._done.set()

    def wait(self, timeout=None) -> bool:
        """Block until ACK; raises DeliveryError if retries were exhausted."""
        if not self._done.wait(timeout):
            return False
        if self._error is not None:
            raise self._error
        return True

    @property
    def acked(self) -> bool:
        return self._done.is_set() and self._error is None


class BrokerClient:
    def __init__(
        self,
        host,
        port,
        client_id,
        ack_timeout=DEFAULT_ACK_TIMEOUT,
        max_attempts=DEFAULT_MAX_ATTEMPTS,
    ):
        self.client_id = client_id
        self.ack_timeout = ack_timeout
        self.max_attempts = max_attempts
        self.messages: queue.Queue[Envelope] = queue.Queue()
        self.notices: list[str] = []
        self._sock = socket.create_connection((host, port), timeout=10.0)
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._send_lock = threading.Lock()
        self._pending: dict[int, PublishHandle] = {}
        self._pending_lock = threading.Lock()
        self._seq = 0
        self._closed = False
        self._on_message = None
        self._pong = threading.Event()
        self._send(protocol.encode_frame(OP_CONNECT, client_id.encode()))
        self._reader = threading.Thread(
            target=self._reader_loop, name=f"client-{client_id}-reader", daemon=True
        )
        self._reader.start()
        self._retransmitter = threading.Thread(
            target=self._retransmit_loop, name=f"client-{client_id}-retx", daemon=True
        )
        self._retransmitter.start()

    # -- sending ---------------------------------------------------------------

    def _send(self, frame: bytes):
        if self._closed:
            raise ConnectionError("client is closed")
        with self._send_lock:
            self._sock.sendall(frame)

    def publish(
        self, topic: str, body: bytes, qos=QOS_BEST_EFFORT, retain=False
    ) -> PublishHandle | None:
        """Publish; returns a PublishHandle for at-least-once, else None."""
        self._seq += 1
        envelope = Envelope(topic=topic, qos=qos, seq=self._seq, body=body, retain=retain)
        frame = protocol.encode_frame(OP_PUB, protocol.encode_pub_body(envelope))
        if qos == QOS_AT_LEAST_ONCE:
            handle = PublishHandle(envelope.seq, frame)
            handle.deadline = time.monotonic() + self.ack_timeout
            with self._pending_lock:
                self._pending[envelope.seq] = handle
            self._send(frame)
            return handle
        self._send(frame)
        return None

    def flush(self, timeout=10.0):
        """Wait until every pending at-least-once publish is acknowledged."""
        deadline = time.monotonic() + timeout
        with self._pending_lock:
            handles = list(self._pending.values())
        for handle in handles:
            remaining = deadline - time.monotonic()
            if remaining <= 0 or not handle.wait(remaining):
                raise DeliveryError(f"flush timed out with seq {handle.seq} pending")

    def subscribe(self, pattern: str, on_message=None):
        if on_message is not None:
            self._on_message = on_message
        self._send(protocol.encode_frame(OP_SUB, pattern.encode()))

    def unsubscribe(self, pattern: str):
        self._send(protocol.encode_frame(OP_UNSUB, pattern.encode()))

    def ping(self, timeout=2.0) -> float:
        self._pong.clear()
        started = time.monotonic()
        self._send(protocol.encode_frame(OP_PING))
        if not self._pong.wait(timeout):
            raise TimeoutError("no PONG from broker")
        return time.monotonic() - started

    def close(self):
        self._closed = True
        with self._pending_lock:
            pending = list(self._pending.values())
            self._pending.clear()
        for handle in pending:
            handle._resolve(DeliveryError("client closed"))
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()

    # -- background threads ------------------------------------------------------

    def _reader_loop(self):
        try:
            while not self._closed:
                op, body = protocol.recv_frame(self._sock)
                if op == OP_PUB:
                    envelope = protocol.decode_pub_body(body)
                    if self._on_message is not None:
                        self._on_message(envelope)
                    self.messages.put(envelope)
                elif op == OP_ACK:
                    seq = protocol.decode_ack_body(body)
                    with self._pending_lock:
                        handle = self._pending.pop(seq, None)
                    if handle is not None:
                        handle._resolve()
                elif op == OP_PONG:
                    self._pong.set()
                elif op == OP_NOTICE:
                    self.notices.append(body.decode(errors="replace"))
        except (ConnectionError, OSError, protocol.ProtocolError):
            pass
        finally:
            self._closed = True
            with self._pending_lock:
                pending = list(self._pending.values())
                self._pending.clear()
            for handle in pending:
                handle._resolve(DeliveryError("connection lost"))

    def _retransmit_loop(self):
        while not self._closed:
            time.sleep(self.ack_timeout / 5)
            now = time.monotonic()
            expired = []
            with self._pending_lock:
                for handle in self._pending.values():
                    if now >= handle.deadline:
                        expired.append(handle)
            for handle in expired:
                if handle.attempts >= self.max_attempts:
                    with self._pending_lock:
                        self._pending.pop(handle.seq, None)
                    handle._resolve(
                        DeliveryError(
                            f"seq {handle.seq} unacknowledged after "
                            f"{handle.attempts} attempts"
                        )
                    )
                    continue
                handle.attempts += 1
                handle.deadline = now + self.ack_timeout
                try:
                    self._send(handle.frame)
                except (ConnectionError, OSError):
                    pass
