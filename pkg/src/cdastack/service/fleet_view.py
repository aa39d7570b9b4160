"""Per-vehicle fleet state assembled purely from received vehicle broadcasts."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

from ..wire_codec import (
    BsmPayload,
    HEADING_UNAVAILABLE,
    HEADING_UNITS_DEG,
    LAT_UNAVAILABLE,
    LON_UNAVAILABLE,
    SPEED_UNAVAILABLE,
    SPEED_UNITS_MPS,
)

__all__ = ["FleetTracker", "VehicleRow", "STALE_AFTER_S"]

STALE_AFTER_S = 5.0
SEGMENT_MATCH_RADIUS_M = 250.0
_METERS_PER_DEG_LAT = 111_320.0


@dataclass
class VehicleRow:
    vehicle_id: int
    segment_id: int | None
    speed_mps: float | None
    heading_deg: float | None
    lat: float | None
    lon: float | None
    last_bsm_at: float
    stale: bool = False
    active_advisory_id: int | None = None

    def to_json(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id,
            "segment_id": self.segment_id,
            "speed_mps": self.speed_mps,
            "heading_deg": self.heading_deg,
            "lat": self.lat,
            "lon": self.lon,
            "last_bsm_at": self.last_bsm_at,
            "stale": self.stale,
            "active_advisory_id": self.active_advisory_id,
        }


def _point_segment_distance_m(lat, lon, seg) -> float:
    # Equirectangular projection around the segment start; fine at road scale.
    scale_lon = math.cos(math.radians(seg.start_lat)) * _METERS_PER_DEG_LAT
    px = (lon - seg.start_lon) * scale_lon
    py = (lat - seg.start_lat) * _METERS_PER_DEG_LAT
    ex = (seg.end_lon - seg.start_lon) * scale_lon
    ey = (seg.end_lat - seg.start_lat) * _METERS_PER_DEG_LAT
    norm_sq = ex * ex + ey * ey
    if norm_sq == 0:
        return math.hypot(px, py)
    t = min(max((px * ex + py * ey) / norm_sq, 0.0), 1.0)
    return math.hypot(px - t * ex, py - t * ey)


class FleetTracker:
    """Latest per-vehicle view from BSM traffic, with staleness marking.

    Optional segment geometry (route segments) lets the tracker resolve a
    vehicle's position to the nearest known segment so advisories can be
    associated with vehicles.
    """

    def __init__(self, segments=None, advisory_lookup=None):
        self._lock = threading.Lock()
        self._rows: dict[int, VehicleRow] = {}
        self.segments = list(segments) if segments else []
        self.advisory_lookup = advisory_lookup

    def handle_bsm(self, payload: BsmPayload, now: float) -> VehicleRow:
        lat = payload.lat / 1e7 if payload.lat != LAT_UNAVAILABLE else None
        lon = payload.lon / 1e7 if payload.lon != LON_UNAVAILABLE else None
        row = VehicleRow(
            vehicle_id=payload.temp_id,
            segment_id=self._resolve_segment(lat, lon),
            speed_mps=(
                payload.speed * SPEED_UNITS_MPS
                if payload.speed != SPEED_UNAVAILABLE
                else None
            ),
            heading_deg=(
                payload.heading * HEADING_UNITS_DEG
                if payload.heading != HEADING_UNAVAILABLE
                else None
            ),
            lat=lat,
            lon=lon,
            last_bsm_at=now,
        )
        if row.segment_id is not None and self.advisory_lookup is not None:
            active = self.advisory_lookup(row.segment_id, now)
            row.active_advisory_id = active.advisory_id if active else None
        with self._lock:
            self._rows[row.vehicle_id] = row
        return row

    def _resolve_segment(self, lat, lon):
        if lat is None or lon is None or not self.segments:
            return None
        best_id, best_dist = None, SEGMENT_MATCH_RADIUS_M
        for seg in self.segments:
            dist = _point_segment_distance_m(lat, lon, seg)
            if dist < best_dist:
                best_id, best_dist = seg.segment_id, dist
        return best_id

    def fleet_state(self, now: float) -> list[VehicleRow]:
        with self._lock:
            rows = sorted(self._rows.values(), key=lambda r: r.vehicle_id)
            for row in rows:
                row.stale = (now - row.last_bsm_at) > STALE_AFTER_S
            return rows
