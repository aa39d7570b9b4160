"""In-process TCP broker: wildcard routing, retained messages, bounded fan-out.

One reader and one writer thread per connection. The routing table and
retained store share a single lock so subscribe/unsubscribe is atomic with
respect to publish routing, which also fixes per-(publisher, topic) order
for at-least-once traffic: a publisher's frames are handled sequentially
and enqueued to each matching subscriber under the lock.

Malformed control frames never take the broker down; the offending
connection is dropped and everyone else keeps flowing.
"""

from __future__ import annotations

import logging
import queue
import socket
import struct
import threading
from dataclasses import dataclass, field

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
    ProtocolError,
)
from .topics import TopicError, topic_matches, validate_pattern, validate_topic

logger = logging.getLogger(__name__)

DEFAULT_PORT = 7320
_SENTINEL = object()


@dataclass
class BrokerStats:
    connections: int = 0
    published: int = 0
    delivered: int = 0
    overflow_disconnects: int = 0
    malformed_disconnects: int = 0
    retained_topics: int = 0


class _Session:
    def __init__(self, broker, conn, addr, queue_limit):
        self.broker = broker
        self.conn = conn
        self.addr = addr
        self.client_id = None
        self.patterns: set[str] = set()
        self.outq: queue.Queue = queue.Queue(maxsize=queue_limit)
        self.alive = True
        self.kill_reason = None

    def enqueue(self, frame: bytes) -> bool:
        try:
            self.outq.put_nowait(frame)
            return True
        except queue.Full:
            self.kill("outbound queue overflow")
            return False

    def kill(self, reason: str):
        if not self.alive:
            return
        self.kill_reason = reason
        self.alive = False
        if "overflow" in reason:
            with self.broker._lock:
                self.broker.stats.overflow_disconnects += 1
        # Best-effort notice; the send buffer may already be full.
        try:
            self.conn.setblocking(False)
            self.conn.send(protocol.encode_frame(OP_NOTICE, reason.encode()))
        except OSError:
            pass
        # Shutdown unblocks both the reader and a writer stuck in sendall.
        try:
            self.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.outq.put_nowait(_SENTINEL)
        except queue.Full:
            pass


class Broker:
    """Topic pub/sub broker over a framed TCP protocol."""

    def __init__(self, host="127.0.0.1", port=DEFAULT_PORT, queue_limit=1024):
        self.host = host
        self._requested_port = port
        self.queue_limit = queue_limit
        self.stats = BrokerStats()
        self._lock = threading.RLock()
        self._sessions: set[_Session] = set()
        self._retained: dict[str, bytes] = {}
        self._listener = None
        self._accept_thread = None
        self._running = False

    @property
    def port(self) -> int:
        if self._listener is None:
            return self._requested_port
        return self._listener.getsockname()[1]

    @property
    def address(self) -> tuple[str, int]:
        return (self.host, self.port)

    def start(self):
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self._requested_port))
        listener.listen(128)
        self._listener = listener
        self._running = True
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="broker-accept", daemon=True
        )
        self._accept_thread.start()
        logger.info("broker listening on %s:%d", self.host, self.port)
        return self

    def stop(self):
        self._running = False
        if self._listener is not None:
            # A blocked accept() is not woken by close(); poke it.
            try:
                socket.create_connection((self.host, self.port), timeout=0.5).close()
            except OSError:
                pass
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            sessions = list(self._sessions)
        for session in sessions:
            session.kill("broker shutting down")
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2.0)

    # -- connection handling ------------------------------------------------

    def _accept_loop(self):
        while self._running:
            try:
                conn, addr = self._listener.accept()
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            session = _Session(self, conn, addr, self.queue_limit)
            with self._lock:
                self._sessions.add(session)
                self.stats.connections += 1
            threading.Thread(
                target=self._reader_loop, args=(session,), daemon=True
            ).start()
            threading.Thread(
                target=self._writer_loop, args=(session,), daemon=True
            ).start()

    def _reader_loop(self, session: _Session):
        try:
            op, body = protocol.recv_frame(session.conn)
            if op != OP_CONNECT:
                raise ProtocolError("first frame must be CONNECT")
            session.client_id = body.decode(errors="replace") or session.addr[0]
            while session.alive:
                op, body = protocol.recv_frame(session.conn)
                self._handle_frame(session, op, body)
        except (ProtocolError, TopicError) as exc:
            logger.warning("disconnecting %s: %s", session.addr, exc)
            with self._lock:
                self.stats.malformed_disconnects += 1
            session.kill(f"protocol error: {exc}")
        except (ConnectionError, OSError):
            session.kill("connection lost")
        except Exception:
            # Whatever a client throws at us, the broker itself stays up.
            logger.exception("unexpected error on %s", session.addr)
            session.kill("internal error")
        finally:
            self._drop_session(session)

    def _writer_loop(self, session: _Session):
        try:
            while True:
                frame = session.outq.get()
                if frame is _SENTINEL or not session.alive:
                    break
                session.conn.sendall(frame)
        except (ConnectionError, OSError):
            session.kill("connection lost")
        finally:
            try:
                session.conn.close()
            except OSError:
                pass
            self._drop_session(session)

    def _drop_session(self, session: _Session):
        session.kill("closed")
        with self._lock:
            self._sessions.discard(session)

    # -- frame handlers -------------------------------------------------------

    def _handle_frame(self, session: _Session, op: int, body: bytes):
        if op == OP_PUB:
            envelope = protocol.decode_pub_body(body)
            validate_topic(envelope.topic)
            self._route(session, envelope, body)
        elif op == OP_SUB:
            pattern = validate_pattern(body.decode(errors="replace"))
            self._subscribe(session, pattern)
        elif op == OP_UNSUB:
            pattern = body.decode(errors="replace")
            with self._lock:
                session.patterns.discard(pattern)
        elif op == OP_PING:
            session.enqueue(protocol.encode_frame(OP_PONG))
        elif op in (OP_PONG, OP_ACK, OP_NOTICE):
            pass
        elif op == OP_CONNECT:
            raise ProtocolError("duplicate CONNECT")

    def _route(self, publisher: _Session, envelope: Envelope, pub_body: bytes):
        frame = protocol.encode_frame(OP_PUB, pub_body)
        with self._lock:
            self.stats.published += 1
            if envelope.retain:
                self._retained[envelope.topic] = frame
                self.stats.retained_topics = len(self._retained)
            for session in self._sessions:
                if not session.alive:
                    continue
                if any(topic_matches(p, envelope.topic) for p in session.patterns):
                    if session.enqueue(frame):
                        self.stats.delivered += 1
        if envelope.qos == QOS_AT_LEAST_ONCE:
            publisher.enqueue(
                protocol.encode_frame(OP_ACK, protocol.encode_ack_body(envelope.seq))
            )

    def _subscribe(self, session: _Session, pattern: str):
        with self._lock:
            session.patterns.add(pattern)
            for topic, frame in self._retained.items():
                if topic_matches(pattern, topic):
                    if session.enqueue(frame):
                        self.stats.delivered += 1
