"""Simulated edge vehicle: kinematics, BSM snapshots, advisory handling.

A vehicle advances along a route of straight segments under a first-order
speed law with acceleration clamps, broadcasts its state at a fixed
cadence, and tracks at most one active advisory for its current segment.
Advisories only ever lower the effective speed target; the driver-set
speed is the ceiling.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

from .wire_codec import (
    ADVISORY_SPEED_CANCEL,
    AdvisoryPayload,
    BsmPayload,
    ELEV_UNAVAILABLE,
    HEADING_UNITS_DEG,
    SPEED_UNITS_MPS,
    START_IMMEDIATE,
)

__all__ = [
    "RouteSegment",
    "Route",
    "ControlLaw",
    "VehicleState",
    "effective_target",
    "tick",
    "bsm_snapshot",
    "on_advisory",
    "compliance_time",
    "advisory_window",
    "COMPLIANCE_TOLERANCE_MPS",
    "BSM_INTERVAL_S",
]

COMPLIANCE_TOLERANCE_MPS = 0.5
BSM_INTERVAL_S = 0.1


@dataclass(frozen=True)
class RouteSegment:
    segment_id: int
    start_lat: float
    start_lon: float
    end_lat: float
    end_lon: float
    length_m: float


class Route:
    """Ordered straight segments with cumulative odometer arithmetic."""

    def __init__(self, segments: list[RouteSegment]):
        if not segments:
            raise ValueError("route needs at least one segment")
        self.segments = list(segments)
        self._cumulative = []
        total = 0.0
        for seg in self.segments:
            if seg.length_m <= 0:
                raise ValueError(f"segment {seg.segment_id} has non-positive length")
            total += seg.length_m
            self._cumulative.append(total)
        self.length_m = total

    @classmethod
    def from_dicts(cls, entries) -> "Route":
        segments = [
            RouteSegment(
                segment_id=int(e["segment_id"]),
                start_lat=float(e["start"][0]),
                start_lon=float(e["start"][1]),
                end_lat=float(e["end"][0]),
                end_lon=float(e["end"][1]),
                length_m=float(e["length_m"]),
            )
            for e in entries
        ]
        return cls(segments)

    def segment_index_at(self, odometer_m: float) -> int:
        index = bisect_right(self._cumulative, odometer_m)
        return min(index, len(self.segments) - 1)

    def segment_at(self, odometer_m: float) -> RouteSegment:
        return self.segments[self.segment_index_at(odometer_m)]

    def position(self, odometer_m: float) -> tuple[float, float]:
        index = self.segment_index_at(odometer_m)
        seg = self.segments[index]
        seg_start = self._cumulative[index] - seg.length_m
        frac = min(max((odometer_m - seg_start) / seg.length_m, 0.0), 1.0)
        return (
            seg.start_lat + (seg.end_lat - seg.start_lat) * frac,
            seg.start_lon + (seg.end_lon - seg.start_lon) * frac,
        )


def segment_bearing_deg(seg: RouteSegment) -> float:
    """Initial great-circle bearing from segment start to end, degrees [0, 360)."""
    lat1, lat2 = math.radians(seg.start_lat), math.radians(seg.end_lat)
    dlon = math.radians(seg.end_lon - seg.start_lon)
    y = math.sin(dlon) * math.cos(lat2)
    x = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    return math.degrees(math.atan2(y, x)) % 360.0


@dataclass
class ControlLaw:
    gain: float = 0.5          # 1/s
    accel_max: float = 2.0     # m/s^2
    decel_max: float = -3.0    # m/s^2
    tick_s: float = 0.1

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if not self.decel_max < 0 < self.accel_max:
            raise ValueError("need decel_max < 0 < accel_max")
        if self.tick_s <= 0:
            raise ValueError("tick_s must be positive")


@dataclass
class VehicleState:
    vehicle_id: int
    route: Route
    odometer_m: float = 0.0
    speed_mps: float = 0.0
    driver_set_speed_mps: float = 0.0
    active_advisory: tuple[AdvisoryPayload, float] | None = None
    msg_cnt: int = 0
    follow_gap_s: float | None = None
    notices: list = field(default_factory=list)
    ignored_advisories: int = 0
    local_advisory_seq: int = 0

    @property
    def current_segment_id(self) -> int:
        return self.route.segment_at(self.odometer_m).segment_id


def advisory_window(advisory: AdvisoryPayload, received_at: float, minute_zero_s=0.0):
    """Active time window in scenario seconds for an advisory."""
    if advisory.start_minute_of_year == START_IMMEDIATE:
        start = received_at
    else:
        start = minute_zero_s + advisory.start_minute_of_year * 60.0
    return start, start + advisory.duration_minutes * 60.0


def _advisory_in_effect(state: VehicleState, now: float) -> AdvisoryPayload | None:
    if state.active_advisory is None:
        return None
    advisory, received_at = state.active_advisory
    if advisory.advisory_speed == ADVISORY_SPEED_CANCEL:
        return None
    if advisory.segment_id != state.current_segment_id:
        return None
    start, end = advisory_window(advisory, received_at)
    if not start <= now <= end:
        return None
    return advisory


def effective_target(state: VehicleState, now: float) -> float:
    """Speed target: the driver-set speed, lowered by any live advisory."""
    advisory = _advisory_in_effect(state, now)
    if advisory is None:
        return state.driver_set_speed_mps
    return min(state.driver_set_speed_mps, advisory.advisory_speed * SPEED_UNITS_MPS)


def tick(state: VehicleState, law: ControlLaw, now: float) -> VehicleState:
    """Advance one control step starting at ``now``; mutates and returns state."""
    target = effective_target(state, now)
    accel = min(max(law.gain * (target - state.speed_mps), law.decel_max), law.accel_max)
    state.speed_mps = max(0.0, state.speed_mps + accel * law.tick_s)
    state.odometer_m = min(
        state.route.length_m, state.odometer_m + state.speed_mps * law.tick_s
    )
    if state.active_advisory is not None:
        advisory, received_at = state.active_advisory
        start, end = advisory_window(advisory, received_at)
        if advisory.segment_id != state.current_segment_id or now > end:
            state.active_advisory = None
    return state


def on_advisory(state: VehicleState, advisory: AdvisoryPayload, now: float) -> VehicleState:
    """Adopt an advisory for the current segment; ignore the rest (counted)."""
    if advisory.segment_id != state.current_segment_id:
        state.ignored_advisories += 1
        return state
    start, end = advisory_window(advisory, now)
    if not start <= now <= end and advisory.advisory_speed != ADVISORY_SPEED_CANCEL:
        state.ignored_advisories += 1
        return state
    if state.active_advisory is not None:
        current, _ = state.active_advisory
        if advisory.advisory_id < current.advisory_id:
            state.ignored_advisories += 1
            return state
    if advisory.advisory_speed == ADVISORY_SPEED_CANCEL:
        state.active_advisory = None
    else:
        state.active_advisory = (advisory, now)
    return state


def bsm_snapshot(state: VehicleState, now: float) -> BsmPayload:
    """Wire-ready state broadcast; rolls the message counter."""
    lat, lon = state.route.position(state.odometer_m)
    seg = state.route.segment_at(state.odometer_m)
    heading_units = round(segment_bearing_deg(seg) / HEADING_UNITS_DEG) % 28800
    payload = BsmPayload(
        msg_cnt=state.msg_cnt,
        temp_id=state.vehicle_id & 0xFFFFFFFF,
        sec_mark=min(int(round((now % 60.0) * 1000.0)), 60999),
        lat=max(-900000000, min(900000000, round(lat * 1e7))),
        lon=max(-1799999999, min(1800000000, round(lon * 1e7))),
        elev=ELEV_UNAVAILABLE,
        speed=min(8190, round(state.speed_mps / SPEED_UNITS_MPS)),
        heading=heading_units,
    )
    state.msg_cnt = (state.msg_cnt + 1) % 128
    return payload


def compliance_time(trace, advisory_speed_mps: float, received_at: float):
    """Seconds from receipt until speed is within tolerance; None if never.

    ``trace`` is an iterable of (time_s, speed_mps) samples at or after
    receipt.
    """
    for t, speed in trace:
        if t < received_at:
            continue
        if abs(speed - advisory_speed_mps) < COMPLIANCE_TOLERANCE_MPS:
            return t - received_at
    return None
