"""Scenario file loading and validation.

A scenario is a JSON document::

    {
      "seed": 42,
      "profile": "lte" | {"name": "lte", "loss_rate": 0.02, ...},
      "vehicles": 20,
      "route": [{"segment_id": 12, "start": [lat, lon], "end": [lat, lon],
                 "length_m": 10000.0}, ...],
      "driver_set_speed_mps": 30.0,
      "spacing_m": 50.0,
      "duration_s": 30.0,
      "region": "fl",
      "metrics_filename": "metrics.csv",
      "timeline": [
        {"at_s": 5.0, "create_advisory": {"segment_id": 12, "speed_mps": 20.0,
                                          "duration_s": 600, "cause": "congestion"}},
        {"at_s": 8.0, "metaaction_text": "...", "vehicle_id": 3},
        {"at_s": 2.0, "feed_update": "relative/or/absolute.json"},
        {"at_s": 12.0, "cancel_advisory": 1}
      ]
    }

Bundled scenarios ship as package data and can be referenced by bare name.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

from ..link_sim import LinkProfile, profile_from_config
from ..vehicle_agent import Route

__all__ = ["Scenario", "ScenarioError", "load_scenario", "bundled_scenario_path"]

_EVENT_KEYS = ("create_advisory", "metaaction_text", "feed_update", "cancel_advisory")


class ScenarioError(ValueError):
    pass


@dataclass
class TimelineEvent:
    at_s: float
    kind: str
    payload: object
    vehicle_id: int | None = None


@dataclass
class Scenario:
    seed: int
    profile: LinkProfile
    vehicles: int
    route: Route
    duration_s: float
    driver_set_speed_mps: float = 30.0
    spacing_m: float = 50.0
    region: str = "fl"
    metrics_filename: str = "metrics.csv"
    timeline: list[TimelineEvent] = field(default_factory=list)
    base_dir: str = "."


def bundled_scenario_path(name: str):
    """Path of a scenario shipped as package data, or None."""
    candidate = resources.files("cdastack").joinpath(f"data/scenarios/{name}.json")
    return candidate if candidate.is_file() else None


def load_scenario(source: str) -> Scenario:
    """Load from a file path or a bundled scenario name."""
    path = source
    if not os.path.exists(path):
        bundled = bundled_scenario_path(source)
        if bundled is None:
            raise ScenarioError(f"scenario not found: {source!r}")
        path = str(bundled)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot load scenario {path!r}: {exc}")
    return parse_scenario(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def parse_scenario(doc: dict, base_dir=".") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be an object")
    try:
        seed = int(doc["seed"])
        vehicles = int(doc["vehicles"])
        duration_s = float(doc["duration_s"])
        route = Route.from_dicts(doc["route"])
        profile = profile_from_config(doc.get("profile", "loopback"))
    except KeyError as exc:
        raise ScenarioError(f"scenario missing required field {exc}")
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scenario field: {exc}")
    if vehicles < 1:
        raise ScenarioError("vehicle count must be >= 1")
    if duration_s <= 0:
        raise ScenarioError("duration_s must be positive")

    timeline = []
    for i, entry in enumerate(doc.get("timeline", [])):
        if not isinstance(entry, dict) or "at_s" not in entry:
            raise ScenarioError(f"timeline entry {i} needs at_s")
        at_s = float(entry["at_s"])
        if not 0 <= at_s <= duration_s:
            raise ScenarioError(
                f"timeline entry {i} at_s={at_s} outside [0, {duration_s}]"
            )
        kinds = [k for k in _EVENT_KEYS if k in entry]
        if len(kinds) != 1:
            raise ScenarioError(
                f"timeline entry {i} must have exactly one of {_EVENT_KEYS}"
            )
        kind = kinds[0]
        timeline.append(
            TimelineEvent(
                at_s=at_s,
                kind=kind,
                payload=entry[kind],
                vehicle_id=entry.get("vehicle_id"),
            )
        )
    timeline.sort(key=lambda e: e.at_s)

    return Scenario(
        seed=seed,
        profile=profile,
        vehicles=vehicles,
        route=route,
        duration_s=duration_s,
        driver_set_speed_mps=float(doc.get("driver_set_speed_mps", 30.0)),
        spacing_m=float(doc.get("spacing_m", 50.0)),
        region=str(doc.get("region", "fl")),
        metrics_filename=str(doc.get("metrics_filename", "metrics.csv")),
        timeline=timeline,
        base_dir=base_dir,
    )
