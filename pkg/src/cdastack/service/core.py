"""Transport-agnostic service core shared by the live HTTP server and the
scenario runner: advisory lifecycle, BSM ingestion, feed snapshots, and
stream events with per-vehicle delta throttling."""

from __future__ import annotations

import threading
import time

from .events import StreamHub
from .feed import FeedStore, ingest_feed
from .fleet_view import FleetTracker
from .store import AdvisoryStore, ValidationError

__all__ = ["ServiceCore"]

FLEET_DELTA_INTERVAL_S = 0.5  # 2 Hz per vehicle


class ServiceCore:
    def __init__(self, log_path, region="fl", publish_fn=None, clock=time.time, segments=None):
        self.clock = clock
        self.region = region
        self.store = AdvisoryStore(
            log_path, region=region, publish_fn=publish_fn, clock=clock
        )
        self.feed = FeedStore()
        self.hub = StreamHub()
        self.fleet = FleetTracker(
            segments=segments, advisory_lookup=self.store.active_for_segment
        )
        self._delta_lock = threading.Lock()
        self._last_delta: dict[int, float] = {}
        self.ignored_bsm = 0

    # -- advisories -----------------------------------------------------------

    def create_advisory(self, segment_id, speed_mps, duration_s, cause="none"):
        record = self.store.create(segment_id, speed_mps, duration_s, cause)
        self.hub.emit("advisory", {"event": "created", "record": record.to_json()})
        return record

    def cancel_advisory(self, advisory_id):
        record = self.store.cancel(advisory_id)
        if record is not None:
            self.hub.emit("advisory", {"event": "cancelled", "record": record.to_json()})
        return record

    def advisories_json(self, now=None):
        return [r.to_json() for r in self.store.list(now)]

    # -- fleet ----------------------------------------------------------------

    def handle_bsm(self, payload, now=None):
        """Ingest one decoded vehicle broadcast; emits a throttled fleet delta."""
        now = self.clock() if now is None else now
        row = self.fleet.handle_bsm(payload, now)
        with self._delta_lock:
            last = self._last_delta.get(row.vehicle_id)
            if last is not None and now - last < FLEET_DELTA_INTERVAL_S:
                return row
            self._last_delta[row.vehicle_id] = now
        self.hub.emit("fleet", {"vehicle": row.to_json()})
        return row

    def fleet_json(self, now=None):
        now = self.clock() if now is None else now
        return [row.to_json() for row in self.fleet.fleet_state(now)]

    # -- feed -----------------------------------------------------------------

    def ingest_feed_source(self, source: str):
        events, diagnostics = ingest_feed(source)
        now = self.clock()
        self.feed.replace(events, diagnostics, now)
        self.hub.emit(
            "feed",
            {"events": [e.to_json() for e in events], "updated_at": now,
             "skipped": len(diagnostics)},
        )
        return events, diagnostics

    def feed_json(self):
        events, diagnostics, updated_at = self.feed.snapshot()
        return {
            "events": [e.to_json() for e in events],
            "skipped": len(diagnostics),
            "updated_at": updated_at,
        }

    # -- stream ---------------------------------------------------------------

    def snapshot_body(self, now=None) -> dict:
        now = self.clock() if now is None else now
        return {
            "advisories": self.advisories_json(now),
            "fleet": self.fleet_json(now),
            "feed": self.feed_json(),
        }

    def open_stream(self):
        """Subscription primed with a state snapshot, then live deltas."""
        sub = self.hub.subscribe()
        self.hub.send_to(sub, "snapshot", self.snapshot_body())
        return sub
