"""Fan-out hub for the console event stream.

Each subscriber gets a bounded queue; a consumer that cannot keep up is
disconnected rather than allowed to stall the rest. Events carry a
globally monotonic sequence number.
"""

from __future__ import annotations

import itertools
import queue
import threading

__all__ = ["StreamHub", "StreamSubscription"]

DEFAULT_BUFFER = 256


class StreamSubscription:
    def __init__(self, hub, buffer_size):
        self._hub = hub
        self.queue: queue.Queue = queue.Queue(maxsize=buffer_size)
        self.alive = True

    def get(self, timeout=None):
        """Next event dict, or None on timeout / after disconnect."""
        if not self.alive and self.queue.empty():
            return None
        try:
            return self.queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self):
        self.alive = False
        self._hub._drop(self)


class StreamHub:
    def __init__(self, buffer_size=DEFAULT_BUFFER):
        self._buffer_size = buffer_size
        self._lock = threading.Lock()
        self._subs: set[StreamSubscription] = set()
        self._seq = itertools.count(1)

    def subscribe(self) -> StreamSubscription:
        sub = StreamSubscription(self, self._buffer_size)
        with self._lock:
            self._subs.add(sub)
        return sub

    def _drop(self, sub):
        with self._lock:
            self._subs.discard(sub)

    def next_seq(self) -> int:
        return next(self._seq)

    def emit(self, kind: str, body: dict) -> dict:
        """Number the event and push it to every live subscriber."""
        event = {"seq": self.next_seq(), "kind": kind, "body": body}
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            try:
                sub.queue.put_nowait(event)
            except queue.Full:
                sub.alive = False
                self._drop(sub)
        return event

    def send_to(self, sub: StreamSubscription, kind: str, body: dict) -> dict:
        """Direct event to one subscriber (connection snapshots)."""
        event = {"seq": self.next_seq(), "kind": kind, "body": body}
        try:
            sub.queue.put_nowait(event)
        except queue.Full:
            sub.alive = False
            self._drop(sub)
        return event
