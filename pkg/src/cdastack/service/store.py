"""Advisory records over an append-only line-delimited log.

Every state change is one JSON line, written and flushed *before* the
corresponding broker publish. Publish completion is logged as its own
line, so a crash between persist and publish leaves a pending entry whose
exact frame bytes (hex in the log) are republished verbatim on restart.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import asdict, dataclass

from .. import wire_codec
from ..wire_codec import (
    ADVISORY_CAUSE_CODES,
    ADVISORY_CAUSES,
    ADVISORY_SPEED_CANCEL,
    AdvisoryPayload,
    SPEED_UNITS_MPS,
    START_IMMEDIATE,
)

__all__ = ["AdvisoryRecord", "AdvisoryStore", "ValidationError", "advisory_topic"]

MAX_SPEED_MPS = 8190 * SPEED_UNITS_MPS  # 163.8

STATUS_ACTIVE = "active"
STATUS_EXPIRED = "expired"
STATUS_CANCELLED = "cancelled"


class ValidationError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def advisory_topic(region: str, segment_id: int) -> str:
    return f"cda/{region}/adv/{segment_id}"


@dataclass
class AdvisoryRecord:
    advisory_id: int
    segment_id: int
    speed_mps: float
    duration_s: float
    cause: str
    created_at: float
    status: str = STATUS_ACTIVE

    def to_json(self) -> dict:
        return asdict(self)

    def effective_status(self, now: float) -> str:
        if self.status == STATUS_ACTIVE and now > self.created_at + self.duration_s:
            return STATUS_EXPIRED
        return self.status


class AdvisoryStore:
    """Validated advisory lifecycle backed by the write-ahead log.

    ``publish_fn(topic, frame_bytes)`` performs the retained at-least-once
    broker publish; when it raises, the advisory stays pending and
    :meth:`republish_pending` retries later (e.g. on broker reconnect).
    """

    def __init__(self, log_path, region="fl", publish_fn=None, clock=time.time):
        self.log_path = str(log_path)
        self.region = region
        self.publish_fn = publish_fn
        self.clock = clock
        self.records: dict[int, AdvisoryRecord] = {}
        self._pending: dict[int, tuple[str, str]] = {}  # publish_seq -> (topic, frame hex)
        self._next_id = 1
        self._next_publish_seq = 1
        self._lock = threading.Lock()
        self._replay()

    # -- log plumbing ---------------------------------------------------------

    def _replay(self):
        if not os.path.exists(self.log_path):
            return
        with open(self.log_path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                kind = entry["kind"]
                if kind == "advisory_created":
                    record = AdvisoryRecord(**entry["record"])
                    self.records[record.advisory_id] = record
                    self._next_id = max(self._next_id, record.advisory_id + 1)
                elif kind == "advisory_cancelled":
                    record = self.records.get(entry["advisory_id"])
                    if record is not None:
                        record.status = STATUS_CANCELLED
                elif kind == "publish_pending":
                    seq = entry["publish_seq"]
                    self._pending[seq] = (entry["topic"], entry["frame"])
                    self._next_publish_seq = max(self._next_publish_seq, seq + 1)
                elif kind == "publish_done":
                    self._pending.pop(entry["publish_seq"], None)

    def _append(self, entry: dict):
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _publish(self, publish_seq: int, topic: str, frame: bytes):
        if self.publish_fn is None:
            return
        self.publish_fn(topic, frame)
        self._append({"kind": "publish_done", "publish_seq": publish_seq})
        self._pending.pop(publish_seq, None)

    # -- operations -----------------------------------------------------------

    def create(self, segment_id, speed_mps, duration_s, cause) -> AdvisoryRecord:
        """Validate, persist, then publish a retained advisory frame."""
        segment_id = _require_int("segment_id", segment_id, 0, 65535)
        if not isinstance(speed_mps, (int, float)) or isinstance(speed_mps, bool):
            raise ValidationError("speed_mps", "must be a number")
        if not 0 <= float(speed_mps) <= MAX_SPEED_MPS:
            raise ValidationError("speed_mps", f"must be within [0, {MAX_SPEED_MPS}]")
        if not isinstance(duration_s, (int, float)) or duration_s <= 0:
            raise ValidationError("duration_s", "must be a positive number")
        cause_code = _cause_code(cause)

        with self._lock:
            now = self.clock()
            record = AdvisoryRecord(
                advisory_id=self._next_id,
                segment_id=segment_id,
                speed_mps=float(speed_mps),
                duration_s=float(duration_s),
                cause=ADVISORY_CAUSES[cause_code],
                created_at=now,
            )
            self._next_id += 1
            payload = AdvisoryPayload(
                advisory_id=record.advisory_id,
                segment_id=segment_id,
                advisory_speed=round(float(speed_mps) / SPEED_UNITS_MPS),
                start_minute_of_year=START_IMMEDIATE,
                duration_minutes=max(1, min(65535, math.ceil(duration_s / 60.0))),
                cause=cause_code,
            )
            frame = wire_codec.encode_frame(payload)
            topic = advisory_topic(self.region, segment_id)
            publish_seq = self._next_publish_seq
            self._next_publish_seq += 1
            self.records[record.advisory_id] = record
            self._append({"kind": "advisory_created", "record": record.to_json()})
            self._append(
                {
                    "kind": "publish_pending",
                    "publish_seq": publish_seq,
                    "advisory_id": record.advisory_id,
                    "topic": topic,
                    "frame": frame.hex(),
                }
            )
            self._pending[publish_seq] = (topic, frame.hex())
            try:
                self._publish(publish_seq, topic, frame)
            except Exception:
                # Stays pending; republish_pending picks it up on reconnect.
                pass
            return record

    def cancel(self, advisory_id: int) -> AdvisoryRecord | None:
        """Mark cancelled and publish a retained cancel for the segment."""
        with self._lock:
            record = self.records.get(advisory_id)
            if record is None:
                return None
            now = self.clock()
            if record.effective_status(now) != STATUS_ACTIVE:
                return record
            record.status = STATUS_CANCELLED
            cancel_payload = AdvisoryPayload(
                advisory_id=min(65535, self._next_id),
                segment_id=record.segment_id,
                advisory_speed=ADVISORY_SPEED_CANCEL,
                start_minute_of_year=START_IMMEDIATE,
                duration_minutes=0,
                cause=ADVISORY_CAUSE_CODES[record.cause],
            )
            self._next_id += 1
            frame = wire_codec.encode_frame(cancel_payload)
            topic = advisory_topic(self.region, record.segment_id)
            publish_seq = self._next_publish_seq
            self._next_publish_seq += 1
            self._append({"kind": "advisory_cancelled", "advisory_id": advisory_id})
            self._append(
                {
                    "kind": "publish_pending",
                    "publish_seq": publish_seq,
                    "advisory_id": advisory_id,
                    "topic": topic,
                    "frame": frame.hex(),
                }
            )
            self._pending[publish_seq] = (topic, frame.hex())
            try:
                self._publish(publish_seq, topic, frame)
            except Exception:
                pass
            return record

    def republish_pending(self) -> int:
        """Publish every logged-but-unpublished frame, byte-identically."""
        with self._lock:
            count = 0
            for publish_seq in sorted(self._pending):
                topic, frame_hex = self._pending[publish_seq]
                try:
                    self._publish(publish_seq, topic, bytes.fromhex(frame_hex))
                    count += 1
                except Exception:
                    break
            return count

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def pending_frames(self) -> list[tuple[str, bytes]]:
        with self._lock:
            return [
                (topic, bytes.fromhex(frame_hex))
                for topic, frame_hex in (self._pending[seq] for seq in sorted(self._pending))
            ]

    def list(self, now=None) -> list[AdvisoryRecord]:
        now = self.clock() if now is None else now
        records = []
        with self._lock:
            for record in self.records.values():
                if record.status == STATUS_ACTIVE:
                    record.status = record.effective_status(now)
                records.append(record)
        return sorted(records, key=lambda r: r.advisory_id)

    def get(self, advisory_id: int) -> AdvisoryRecord | None:
        with self._lock:
            return self.records.get(advisory_id)

    def active_for_segment(self, segment_id: int, now=None) -> AdvisoryRecord | None:
        now = self.clock() if now is None else now
        best = None
        with self._lock:
            for record in self.records.values():
                if record.segment_id == segment_id and record.effective_status(now) == STATUS_ACTIVE:
                    if best is None or record.advisory_id > best.advisory_id:
                        best = record
        return best


def _require_int(field: str, value, lo: int, hi: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(field, "must be an integer")
    if not lo <= value <= hi:
        raise ValidationError(field, f"must be within [{lo}, {hi}]")
    return value


def _cause_code(cause) -> int:
    if isinstance(cause, str):
        try:
            return ADVISORY_CAUSE_CODES[cause.lower()]
        except KeyError:
            raise ValidationError("cause", f"unknown cause {cause!r}")
    if isinstance(cause, int) and not isinstance(cause, bool) and cause in ADVISORY_CAUSES:
        return cause
    raise ValidationError("cause", f"unknown cause {cause!r}")
