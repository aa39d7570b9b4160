"""The only bridge from generated text to vehicle setpoints.

Model output must carry exactly one fenced block::

    ```metaaction
    action: SetCruiseSpeed
    speed_mps: 25
    ```

The block is parsed against a fixed command catalog, then validated
against a safety envelope (numeric ranges plus a per-vehicle rate limit).
Anything that fails anywhere yields a typed :class:`CommandRejected` and
no vehicle state change; there is no other failure mode by design.
"""

from __future__ import annotations

import enum
import math
import re
import time
from dataclasses import dataclass

from . import vehicle_agent
from .wire_codec import (
    ADVISORY_SPEED_CANCEL,
    AdvisoryPayload,
    SPEED_UNITS_MPS,
    START_IMMEDIATE,
)

__all__ = [
    "Action",
    "MetaActionCommand",
    "SafetyEnvelope",
    "ValidatedCommand",
    "RejectionReason",
    "CommandRejected",
    "parse_command",
    "validate",
    "apply",
]

BLOCK_OPEN = "```metaaction"
BLOCK_CLOSE = "```"


class Action(str, enum.Enum):
    SET_CRUISE_SPEED = "SetCruiseSpeed"
    SET_FOLLOW_GAP = "SetFollowGap"
    APPLY_ADVISORY_SPEED = "ApplyAdvisorySpeed"
    CANCEL_ADVISORY = "CancelAdvisory"
    DRIVER_NOTICE = "DriverNotice"


# Required parameters per action: name -> converter raising ValueError.
def _as_number(raw):
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("non-finite number")
    return value


def _as_int(raw):
    if isinstance(raw, float):
        if not raw.is_integer():
            raise ValueError("not an integer")
        return int(raw)
    return int(raw)


def _as_text(raw):
    return str(raw)


def _as_severity(raw):
    value = str(raw).strip().lower()
    if value not in ("info", "warn"):
        raise ValueError("severity must be info or warn")
    return value


_PARAM_SPECS = {
    Action.SET_CRUISE_SPEED: {"speed_mps": _as_number},
    Action.SET_FOLLOW_GAP: {"gap_s": _as_number},
    Action.APPLY_ADVISORY_SPEED: {
        "segment_id": _as_int,
        "speed_mps": _as_number,
        "duration_s": _as_number,
    },
    Action.CANCEL_ADVISORY: {"segment_id": _as_int},
    Action.DRIVER_NOTICE: {"text": _as_text, "severity": _as_severity},
}


class RejectionReason(enum.Enum):
    NO_BLOCK = "no_block"
    MULTIPLE_BLOCKS = "multiple_blocks"
    MALFORMED_BLOCK = "malformed_block"
    UNKNOWN_ACTION = "unknown_action"
    MISSING_PARAM = "missing_param"
    BAD_PARAM = "bad_param"
    OUT_OF_RANGE = "out_of_range"
    RATE_LIMITED = "rate_limited"


class CommandRejected(Exception):
    """Typed rejection; the system performs no action and keeps running."""

    def __init__(self, reason: RejectionReason, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)


@dataclass(frozen=True)
class MetaActionCommand:
    action: Action
    params: dict


@dataclass(frozen=True)
class SafetyEnvelope:
    speed_min_mps: float = 0.0
    speed_max_mps: float = 38.0
    gap_min_s: float = 0.8
    gap_max_s: float = 4.0
    rate_limit_s: float = 1.0
    notice_max_len: int = 200

    def __post_init__(self):
        if not self.speed_min_mps < self.speed_max_mps:
            raise ValueError("speed_min must be below speed_max")
        if not self.gap_min_s < self.gap_max_s:
            raise ValueError("gap_min must be below gap_max")
        if self.rate_limit_s < 0:
            raise ValueError("rate_limit_s must be non-negative")


@dataclass(frozen=True)
class ValidatedCommand:
    """The only command type the control layer accepts."""

    command: MetaActionCommand
    validated_at: float


_KEY_VALUE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*)$")


def _extract_block(text: str) -> list[str]:
    lines = text.splitlines()
    blocks = []
    current = None
    for line in lines:
        stripped = line.strip()
        if current is None:
            if stripped == BLOCK_OPEN:
                current = []
        elif stripped == BLOCK_CLOSE:
            blocks.append(current)
            current = None
        else:
            current.append(line)
    if current is not None:
        raise CommandRejected(RejectionReason.MALFORMED_BLOCK, "unterminated block")
    if not blocks:
        raise CommandRejected(RejectionReason.NO_BLOCK)
    if len(blocks) > 1:
        raise CommandRejected(
            RejectionReason.MULTIPLE_BLOCKS, f"{len(blocks)} blocks found"
        )
    return blocks[0]


def parse_command(text: str) -> MetaActionCommand:
    """Extract and type-check the single metaaction block in model output.

    Surrounding prose is ignored. Raises CommandRejected for every way the
    input can be wrong; never anything else.
    """
    if not isinstance(text, str):
        raise CommandRejected(RejectionReason.NO_BLOCK, "input is not text")
    block = _extract_block(text)
    pairs = {}
    for line in block:
        if not line.strip():
            continue
        match = _KEY_VALUE.match(line.strip())
        if match is None:
            raise CommandRejected(
                RejectionReason.MALFORMED_BLOCK, f"not a key: value line: {line.strip()[:60]!r}"
            )
        key, value = match.group(1), match.group(2).strip()
        if key in pairs:
            raise CommandRejected(RejectionReason.MALFORMED_BLOCK, f"duplicate key {key!r}")
        pairs[key] = value
    if "action" not in pairs:
        raise CommandRejected(RejectionReason.MISSING_PARAM, "action")
    action_name = pairs.pop("action")
    try:
        action = Action(action_name)
    except ValueError:
        raise CommandRejected(RejectionReason.UNKNOWN_ACTION, action_name[:60])
    spec = _PARAM_SPECS[action]
    params = {}
    for name, convert in spec.items():
        if name not in pairs:
            raise CommandRejected(RejectionReason.MISSING_PARAM, name)
        try:
            params[name] = convert(pairs.pop(name))
        except (ValueError, TypeError) as exc:
            raise CommandRejected(RejectionReason.BAD_PARAM, f"{name}: {exc}")
    if pairs:
        raise CommandRejected(
            RejectionReason.BAD_PARAM, f"unexpected keys: {', '.join(sorted(pairs))}"
        )
    return MetaActionCommand(action=action, params=params)


def _check_range(name, value, lo, hi):
    if not lo <= value <= hi:
        raise CommandRejected(
            RejectionReason.OUT_OF_RANGE, f"{name}={value} outside [{lo}, {hi}]"
        )


def validate(
    command: MetaActionCommand,
    envelope: SafetyEnvelope,
    last_accepted_at: float | None,
    now: float,
) -> ValidatedCommand:
    """Clamp-free validation: out-of-envelope commands are rejected, not adjusted."""
    if (
        envelope.rate_limit_s > 0
        and last_accepted_at is not None
        and now - last_accepted_at < envelope.rate_limit_s
    ):
        remaining = envelope.rate_limit_s - (now - last_accepted_at)
        raise CommandRejected(RejectionReason.RATE_LIMITED, f"{remaining:.2f}s remaining")
    params = command.params
    if command.action == Action.SET_CRUISE_SPEED:
        _check_range("speed_mps", params["speed_mps"], envelope.speed_min_mps, envelope.speed_max_mps)
    elif command.action == Action.SET_FOLLOW_GAP:
        _check_range("gap_s", params["gap_s"], envelope.gap_min_s, envelope.gap_max_s)
    elif command.action == Action.APPLY_ADVISORY_SPEED:
        _check_range("speed_mps", params["speed_mps"], envelope.speed_min_mps, envelope.speed_max_mps)
        _check_range("segment_id", params["segment_id"], 0, 65535)
        _check_range("duration_s", params["duration_s"], 1.0, 65535 * 60.0)
    elif command.action == Action.CANCEL_ADVISORY:
        _check_range("segment_id", params["segment_id"], 0, 65535)
    elif command.action == Action.DRIVER_NOTICE:
        if len(params["text"]) > envelope.notice_max_len:
            raise CommandRejected(
                RejectionReason.OUT_OF_RANGE,
                f"notice length {len(params['text'])} exceeds {envelope.notice_max_len}",
            )
    return ValidatedCommand(command=command, validated_at=now)


def apply(
    validated: ValidatedCommand,
    state: vehicle_agent.VehicleState,
    now: float | None = None,
) -> vehicle_agent.VehicleState:
    """Apply a validated command to agent state. Validation already happened."""
    now = validated.validated_at if now is None else now
    command = validated.command
    params = command.params
    if command.action == Action.SET_CRUISE_SPEED:
        state.driver_set_speed_mps = params["speed_mps"]
    elif command.action == Action.SET_FOLLOW_GAP:
        state.follow_gap_s = params["gap_s"]
    elif command.action == Action.APPLY_ADVISORY_SPEED:
        advisory = AdvisoryPayload(
            advisory_id=_next_local_advisory_id(state),
            segment_id=params["segment_id"],
            advisory_speed=min(8190, round(params["speed_mps"] / SPEED_UNITS_MPS)),
            start_minute_of_year=START_IMMEDIATE,
            duration_minutes=max(1, min(65535, math.ceil(params["duration_s"] / 60.0))),
            cause=0,
        )
        vehicle_agent.on_advisory(state, advisory, now)
    elif command.action == Action.CANCEL_ADVISORY:
        cancel = AdvisoryPayload(
            advisory_id=_next_local_advisory_id(state),
            segment_id=params["segment_id"],
            advisory_speed=ADVISORY_SPEED_CANCEL,
            start_minute_of_year=START_IMMEDIATE,
            duration_minutes=0,
            cause=0,
        )
        vehicle_agent.on_advisory(state, cancel, now)
    elif command.action == Action.DRIVER_NOTICE:
        state.notices.append((params["severity"], params["text"]))
    return state


def _next_local_advisory_id(state: vehicle_agent.VehicleState) -> int:
    state.local_advisory_seq += 1
    floor = 0
    if state.active_advisory is not None:
        floor = state.active_advisory[0].advisory_id + 1
    return min(65535, max(state.local_advisory_seq, floor))


class RateLimiter:
    """One acceptance timestamp per vehicle, for callers that serialize applies."""

    def __init__(self, clock=time.monotonic):
        self._clock = clock
        self._last: dict[int, float] = {}

    def last_accepted_at(self, vehicle_id: int) -> float | None:
        return self._last.get(vehicle_id)

    def record(self, vehicle_id: int, at: float):
        self._last[vehicle_id] = at
