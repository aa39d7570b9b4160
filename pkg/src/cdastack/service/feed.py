"""Traffic feed ingest: a minimal 511-style event document.

Document format::

    {"events": [{"event_id": ..., "roadway": ..., "direction": ...,
                 "kind": incident|congestion|construction|closure,
                 "severity": 1..5, "description": ..., "lat": ..., "lon": ...,
                 "updated_at": ...}, ...]}

Entries that fail validation are skipped with a per-entry diagnostic; a
snapshot replaces the previous one atomically.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass

import requests

__all__ = ["FeedEvent", "FeedError", "FeedStore", "parse_feed", "ingest_feed"]

FEED_KINDS = ("incident", "congestion", "construction", "closure")


class FeedError(Exception):
    pass


@dataclass(frozen=True)
class FeedEvent:
    event_id: str
    roadway: str
    direction: str
    kind: str
    severity: int
    description: str
    lat: float
    lon: float
    updated_at: str

    def to_json(self) -> dict:
        return asdict(self)


def _validate_entry(entry, seen_ids):
    if not isinstance(entry, dict):
        raise ValueError("entry is not an object")
    missing = [
        key
        for key in ("event_id", "roadway", "direction", "kind", "severity",
                    "description", "lat", "lon", "updated_at")
        if key not in entry
    ]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    event_id = str(entry["event_id"])
    if event_id in seen_ids:
        raise ValueError(f"duplicate event_id {event_id}")
    kind = str(entry["kind"]).lower()
    if kind not in FEED_KINDS:
        raise ValueError(f"unknown kind {entry['kind']!r}")
    severity = entry["severity"]
    if not isinstance(severity, int) or isinstance(severity, bool) or not 1 <= severity <= 5:
        raise ValueError(f"severity {severity!r} outside 1..5")
    lat, lon = float(entry["lat"]), float(entry["lon"])
    if not -90 <= lat <= 90:
        raise ValueError(f"lat {lat} outside [-90, 90]")
    if not -180 <= lon <= 180:
        raise ValueError(f"lon {lon} outside [-180, 180]")
    return FeedEvent(
        event_id=event_id,
        roadway=str(entry["roadway"]),
        direction=str(entry["direction"]),
        kind=kind,
        severity=severity,
        description=str(entry["description"]),
        lat=lat,
        lon=lon,
        updated_at=str(entry["updated_at"]),
    )


def parse_feed(document) -> tuple[list[FeedEvent], list[str]]:
    """Events plus diagnostics for every skipped entry."""
    if not isinstance(document, dict) or not isinstance(document.get("events"), list):
        raise FeedError("feed document must be an object with an 'events' list")
    events, diagnostics = [], []
    seen = set()
    for i, entry in enumerate(document["events"]):
        try:
            event = _validate_entry(entry, seen)
        except (ValueError, TypeError) as exc:
            diagnostics.append(f"entry {i}: {exc}")
            continue
        seen.add(event.event_id)
        events.append(event)
    return events, diagnostics


def ingest_feed(source: str) -> tuple[list[FeedEvent], list[str]]:
    """Parse a feed from a file path or an http(s) URL."""
    try:
        if source.startswith(("http://", "https://")):
            response = requests.get(source, timeout=10.0)
            response.raise_for_status()
            document = response.json()
        else:
            with open(source) as fh:
                document = json.load(fh)
    except FeedError:
        raise
    except (OSError, requests.RequestException) as exc:
        raise FeedError(f"cannot read feed source {source!r}: {exc}")
    except json.JSONDecodeError as exc:
        raise FeedError(f"feed source {source!r} is not valid JSON: {exc}")
    return parse_feed(document)


class FeedStore:
    """Current feed snapshot; replaced atomically on each ingest."""

    def __init__(self):
        self._lock = threading.Lock()
        self._events: list[FeedEvent] = []
        self._diagnostics: list[str] = []
        self._updated_at: float | None = None

    def replace(self, events, diagnostics, at):
        with self._lock:
            self._events = list(events)
            self._diagnostics = list(diagnostics)
            self._updated_at = at

    def snapshot(self):
        with self._lock:
            return list(self._events), list(self._diagnostics), self._updated_at
