"""Model-client boundary: prompts in, timed responses and latency stats out.

The gateway builds deterministic prompts from vehicle context, invokes a
model client (scripted mock or a minimal HTTP completion endpoint), and
measures request-to-response wall-clock latency plus whitespace token
counts. It has no handle to agent state: everything a model says must go
through the meta_action parse/validate/apply path to reach a vehicle.
"""

from __future__ import annotations

import concurrent.futures
import json
import os
import time
from dataclasses import dataclass
from typing import Protocol

import requests

__all__ = [
    "ModelClient",
    "MockModelClient",
    "RemoteModelClient",
    "GatewayContext",
    "RequestSample",
    "LatencyReport",
    "build_prompt",
    "request",
    "aggregate_stats",
    "report_csv_lines",
    "write_report_csv",
]

MODEL_TOKEN_ENV = "CDA_MODEL_TOKEN"
DEFAULT_TIMEOUT_S = 30.0

PROMPT_HEADER = """\
You are the onboard driving assistant. You may adjust vehicle settings only by
emitting exactly one fenced command block in this exact form:

```metaaction
action: <one of SetCruiseSpeed | SetFollowGap | ApplyAdvisorySpeed | CancelAdvisory | DriverNotice>
<param>: <value>
```

Required params: SetCruiseSpeed(speed_mps), SetFollowGap(gap_s),
ApplyAdvisorySpeed(segment_id, speed_mps, duration_s), CancelAdvisory(segment_id),
DriverNotice(text, severity=info|warn). One block per response; prose outside
the block is ignored. Commands outside the safety envelope are discarded.
"""


class ModelClient(Protocol):
    name: str
    runner: str

    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class ScriptStep:
    delay_ms: float
    response_text: str


class MockModelClient:
    """Deterministic scripted client; replays fixture steps in order."""

    def __init__(self, script, name="mock", runner="edge"):
        self.name = name
        self.runner = runner
        self._steps = [
            step if isinstance(step, ScriptStep) else ScriptStep(**step)
            for step in script
        ]
        if not self._steps:
            raise ValueError("script needs at least one step")
        self._cursor = 0

    @classmethod
    def from_file(cls, path, name="mock", runner="edge"):
        with open(path) as fh:
            return cls(json.load(fh), name=name, runner=runner)

    def complete(self, prompt: str) -> str:
        step = self._steps[min(self._cursor, len(self._steps) - 1)]
        self._cursor += 1
        if step.delay_ms > 0:
            time.sleep(step.delay_ms / 1000.0)
        return step.response_text


class RemoteModelClient:
    """Minimal HTTP completion contract: POST {"prompt": ...} -> {"text": ...}."""

    def __init__(self, endpoint, name="remote", runner="cloud", timeout_s=DEFAULT_TIMEOUT_S):
        self.endpoint = endpoint
        self.name = name
        self.runner = runner
        self.timeout_s = timeout_s

    def complete(self, prompt: str) -> str:
        headers = {}
        token = os.environ.get(MODEL_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        response = requests.post(
            self.endpoint, json={"prompt": prompt}, headers=headers, timeout=self.timeout_s
        )
        response.raise_for_status()
        return response.json()["text"]


@dataclass(frozen=True)
class GatewayContext:
    vehicle_id: int | None = None
    segment_id: int | None = None
    speed_mps: float | None = None
    driver_set_speed_mps: float | None = None
    advisory_segment_id: int | None = None
    advisory_speed_mps: float | None = None
    feed_summary: tuple[str, ...] = ()


def build_prompt(context: GatewayContext | None = None) -> str:
    """Deterministic prompt: instructions plus serialized context."""
    lines = [PROMPT_HEADER]
    if context is not None:
        facts = []
        if context.vehicle_id is not None:
            facts.append(f"vehicle_id: {context.vehicle_id}")
        if context.segment_id is not None:
            facts.append(f"current_segment: {context.segment_id}")
        if context.speed_mps is not None:
            facts.append(f"speed_mps: {context.speed_mps:.2f}")
        if context.driver_set_speed_mps is not None:
            facts.append(f"driver_set_speed_mps: {context.driver_set_speed_mps:.2f}")
        if context.advisory_segment_id is not None:
            facts.append(
                f"active_advisory: segment {context.advisory_segment_id} "
                f"at {context.advisory_speed_mps:.2f} m/s"
            )
        for entry in context.feed_summary:
            facts.append(f"traffic: {entry}")
        if facts:
            lines.append("Context:")
            lines.extend(facts)
    return "\n".join(lines)


@dataclass(frozen=True)
class RequestSample:
    ok: bool
    text: str
    latency_s: float
    token_count: int
    error: str | None = None


@dataclass(frozen=True)
class LatencyReport:
    model: str
    runner: str
    mean_s: float
    median_s: float
    avg_tokens: int
    n_samples: int
    n_failed: int = 0


_EXECUTOR = concurrent.futures.ThreadPoolExecutor(max_workers=8)


def request(client, prompt: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> RequestSample:
    """One timed completion; failures become failed samples, not exceptions."""
    started = time.perf_counter()
    future = _EXECUTOR.submit(client.complete, prompt)
    try:
        text = future.result(timeout=timeout_s)
    except concurrent.futures.TimeoutError:
        future.cancel()
        return RequestSample(False, "", time.perf_counter() - started, 0, "timeout")
    except Exception as exc:
        return RequestSample(False, "", time.perf_counter() - started, 0, str(exc))
    latency = time.perf_counter() - started
    return RequestSample(True, text, latency, len(text.split()))


def aggregate_stats(samples, model: str = "", runner: str = "") -> LatencyReport:
    """Mean/median latency and mean token count over successful samples."""
    samples = list(samples)
    good = [s for s in samples if s.ok]
    failed = len(samples) - len(good)
    if not good:
        raise ValueError("no successful samples to aggregate")
    n = len(good)
    latencies = sorted(s.latency_s for s in good)
    mean = sum(s.latency_s for s in good) / n
    mid = n // 2
    median = latencies[mid] if n % 2 else (latencies[mid - 1] + latencies[mid]) / 2.0
    avg_tokens = round(sum(s.token_count for s in good) / n)
    return LatencyReport(
        model=model,
        runner=runner,
        mean_s=mean,
        median_s=median,
        avg_tokens=int(avg_tokens),
        n_samples=n,
        n_failed=failed,
    )


REPORT_COLUMNS = ("model", "runner", "mean_s", "median_s", "avg_tokens")


def report_csv_lines(reports) -> list[str]:
    lines = [",".join(REPORT_COLUMNS)]
    for r in reports:
        lines.append(f"{r.model},{r.runner},{r.mean_s:.2f},{r.median_s:.2f},{r.avg_tokens}")
    return lines


def write_report_csv(reports, path):
    with open(path, "w") as fh:
        fh.write("\n".join(report_csv_lines(reports)) + "\n")
