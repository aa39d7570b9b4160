"""Discrete-event core: a simulated clock plus in-memory topic routing.

Everything is single-threaded and deterministic: events fire in
(time, insertion order), and all randomness lives in the per-link seeded
generators.
"""

from __future__ import annotations

import heapq
import itertools

from ..transport.topics import topic_matches

__all__ = ["SimScheduler", "SimBroker"]


class SimScheduler:
    def __init__(self):
        self._heap = []
        self._tie = itertools.count()
        self.now = 0.0

    def schedule(self, at: float, fn):
        heapq.heappush(self._heap, (at, next(self._tie), fn))

    def schedule_in(self, delay: float, fn):
        self.schedule(self.now + delay, fn)

    def run_until(self, end: float):
        while self._heap and self._heap[0][0] <= end:
            at, _, fn = heapq.heappop(self._heap)
            self.now = max(self.now, at)
            fn()
        self.now = end


class SimBroker:
    """Topic routing with retained messages, broker side of the sim plane.

    Subscribers register a ``deliver(topic, frame, retained)`` callable;
    the engine decides how each delivery crosses its impaired link.
    """

    def __init__(self):
        self._subs: dict[object, tuple[str, object]] = {}
        self._retained: dict[str, bytes] = {}
        self.published = 0

    def subscribe(self, key, pattern: str, deliver):
        """(Re)bind ``key`` to one pattern; retained matches replay at once."""
        self._subs[key] = (pattern, deliver)
        for topic, frame in self._retained.items():
            if topic_matches(pattern, topic):
                deliver(topic, frame, True)

    def unsubscribe(self, key):
        self._subs.pop(key, None)

    def publish(self, topic: str, frame: bytes, retain=False):
        self.published += 1
        if retain:
            self._retained[topic] = frame
        for pattern, deliver in list(self._subs.values()):
            if topic_matches(pattern, topic):
                deliver(topic, frame, False)
