"""Operator advisory service: HTTP API, append-only persistence, feed ingest,
fleet state assembly, and a live event stream."""

from .store import AdvisoryRecord, AdvisoryStore, ValidationError
from .feed import FeedEvent, FeedError, FeedStore, ingest_feed, parse_feed
from .fleet_view import FleetTracker
from .events import StreamHub
from .core import ServiceCore
from .app import serve_http

__all__ = [
    "AdvisoryRecord",
    "AdvisoryStore",
    "ValidationError",
    "FeedEvent",
    "FeedError",
    "FeedStore",
    "ingest_feed",
    "parse_feed",
    "FleetTracker",
    "StreamHub",
    "ServiceCore",
    "serve_http",
]
