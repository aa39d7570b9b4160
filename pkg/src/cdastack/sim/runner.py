"""Deterministic scenario execution: broker, service, links, and agents in
one simulated-time process.

Topology mirrors the deployed system: the advisory service and broker are
co-located (cloud side), and each vehicle reaches them over its own
seeded impaired link per direction. Advisory traffic rides the reliable
(stream-like) path, so loss shows up as delay only; vehicle broadcasts
ride the datagram path where loss drops frames. Delivery latency is
measured from the frame's hand-off to the subscriber's link to its
arrival at the agent.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .. import meta_action, wire_codec
from ..link_sim import ImpairedLink
from ..service.core import ServiceCore
from ..vehicle_agent import (
    BSM_INTERVAL_S,
    ControlLaw,
    VehicleState,
    bsm_snapshot,
    compliance_time,
    on_advisory,
    tick,
)
from .engine import SimBroker, SimScheduler
from .scenario import Scenario

__all__ = ["RunMetrics", "DeliveryRow", "run_scenario"]

_SEED_STRIDE = 1000003


@dataclass
class DeliveryRow:
    advisory_id: int
    vehicle_id: int
    transmit_at_s: float
    receipt_at_s: float
    speed_mps: float | None  # None for cancels
    compliance_s: float | None = None

    @property
    def delivery_ms(self) -> float:
        return (self.receipt_at_s - self.transmit_at_s) * 1000.0


@dataclass
class RunMetrics:
    seed: int
    profile_name: str
    duration_s: float
    deliveries: list[DeliveryRow] = field(default_factory=list)
    duplicate_deliveries: int = 0
    bsm_sent: int = 0
    bsm_dropped: int = 0
    bsm_received: int = 0
    advisory_marks: list[tuple[float, int, float]] = field(default_factory=list)
    traces: dict[int, list[tuple[float, float]]] = field(default_factory=dict)
    applied_commands: int = 0
    rejected_commands: list[str] = field(default_factory=list)
    _seen_deliveries: set = field(default_factory=set, repr=False)

    def summary(self) -> dict:
        latencies = sorted(row.delivery_ms for row in self.deliveries)
        compliances = sorted(
            row.compliance_s for row in self.deliveries if row.compliance_s is not None
        )
        return {
            "seed": self.seed,
            "profile": self.profile_name,
            "duration_s": self.duration_s,
            "deliveries": len(self.deliveries),
            "duplicate_deliveries": self.duplicate_deliveries,
            "delivery_ms_min": latencies[0] if latencies else None,
            "delivery_ms_mean": sum(latencies) / len(latencies) if latencies else None,
            "delivery_ms_max": latencies[-1] if latencies else None,
            "compliance_s_min": compliances[0] if compliances else None,
            "compliance_s_max": compliances[-1] if compliances else None,
            "compliant_vehicles": len(compliances),
            "bsm_sent": self.bsm_sent,
            "bsm_dropped": self.bsm_dropped,
            "bsm_received": self.bsm_received,
            "applied_commands": self.applied_commands,
            "rejected_commands": len(self.rejected_commands),
        }


class _SimVehicle:
    def __init__(self, index, scenario, scheduler, broker, metrics):
        self.state = VehicleState(
            vehicle_id=index + 1,
            route=scenario.route,
            odometer_m=min(index * scenario.spacing_m, scenario.route.length_m),
            speed_mps=scenario.driver_set_speed_mps,
            driver_set_speed_mps=scenario.driver_set_speed_mps,
        )
        self.law = ControlLaw()
        base = scenario.seed * _SEED_STRIDE + (index + 1) * 2
        self.downlink = ImpairedLink(scenario.profile, base)
        self.uplink = ImpairedLink(scenario.profile, base + 1)
        self.scheduler = scheduler
        self.broker = broker
        self.metrics = metrics
        self.region = scenario.region
        self.subscribed_segment = None
        self.last_accepted_at = None
        metrics.traces[self.state.vehicle_id] = [(0.0, self.state.speed_mps)]

    # -- advisory downlink -----------------------------------------------------

    def subscribe_current_segment(self):
        segment_id = self.state.current_segment_id
        if segment_id == self.subscribed_segment:
            return
        self.subscribed_segment = segment_id
        pattern = f"cda/{self.region}/adv/{segment_id}"
        self.broker.subscribe(("vehicle", self.state.vehicle_id), pattern, self._deliver)

    def _deliver(self, topic, frame, retained):
        transmit_at = self.scheduler.now
        deliver_at = self.downlink.transmit(transmit_at, reliable=True)
        self.scheduler.schedule(deliver_at, lambda: self._receive(frame, transmit_at))

    def _receive(self, frame, transmit_at):
        now = self.scheduler.now
        try:
            decoded_frame, payload = wire_codec.decode_frame(frame)
        except wire_codec.CodecError:
            return
        if decoded_frame.msg_type != wire_codec.MSG_TYPE_ADVISORY:
            return
        on_advisory(self.state, payload, now)
        key = (payload.advisory_id, self.state.vehicle_id)
        if key in self.metrics._seen_deliveries:
            self.metrics.duplicate_deliveries += 1
            return
        self.metrics._seen_deliveries.add(key)
        is_cancel = payload.advisory_speed == wire_codec.ADVISORY_SPEED_CANCEL
        self.metrics.deliveries.append(
            DeliveryRow(
                advisory_id=payload.advisory_id,
                vehicle_id=self.state.vehicle_id,
                transmit_at_s=transmit_at,
                receipt_at_s=now,
                speed_mps=None if is_cancel
                else payload.advisory_speed * wire_codec.SPEED_UNITS_MPS,
            )
        )

    # -- tick / uplink -----------------------------------------------------------

    def on_tick(self):
        now = self.scheduler.now
        payload = bsm_snapshot(self.state, now)
        frame = wire_codec.encode_frame(payload)
        self.metrics.bsm_sent += 1
        deliver_at = self.uplink.transmit(now, reliable=False)
        if deliver_at is None:
            self.metrics.bsm_dropped += 1
        else:
            topic = f"cda/{self.region}/veh/{self.state.vehicle_id}/bsm"
            self.scheduler.schedule(
                deliver_at, lambda: self.broker.publish(topic, frame)
            )
        tick(self.state, self.law, now)
        self.metrics.traces[self.state.vehicle_id].append(
            (now + self.law.tick_s, self.state.speed_mps)
        )
        self.subscribe_current_segment()
        self.scheduler.schedule(now + BSM_INTERVAL_S, self.on_tick)


def run_scenario(scenario: Scenario, out_dir=None, figures=False) -> RunMetrics:
    """Execute a scenario; optionally write CSV/summary/figures to ``out_dir``."""
    scheduler = SimScheduler()
    broker = SimBroker()
    metrics = RunMetrics(
        seed=scenario.seed,
        profile_name=scenario.profile.name,
        duration_s=scenario.duration_s,
    )

    log_path = os.path.join(out_dir, "advisories.log") if out_dir else os.devnull
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        if os.path.exists(log_path):
            os.remove(log_path)
    core = ServiceCore(
        log_path,
        region=scenario.region,
        publish_fn=lambda topic, frame: broker.publish(topic, frame, retain=True),
        clock=lambda: scheduler.now,
        segments=scenario.route.segments,
    )

    def service_deliver(topic, frame, retained):
        # Cloud side: broker and service are co-located, no link in between.
        try:
            decoded_frame, payload = wire_codec.decode_frame(frame)
        except wire_codec.CodecError:
            return
        if decoded_frame.msg_type == wire_codec.MSG_TYPE_BSM:
            metrics.bsm_received += 1
            core.handle_bsm(payload, scheduler.now)

    broker.subscribe("service", f"cda/{scenario.region}/veh/+/bsm", service_deliver)

    vehicles = [
        _SimVehicle(i, scenario, scheduler, broker, metrics)
        for i in range(scenario.vehicles)
    ]
    for vehicle in vehicles:
        vehicle.subscribe_current_segment()

    envelope = meta_action.SafetyEnvelope()

    def run_metaaction(text, vehicle):
        try:
            command = meta_action.parse_command(text)
            validated = meta_action.validate(
                command, envelope, vehicle.last_accepted_at, scheduler.now
            )
            meta_action.apply(validated, vehicle.state, scheduler.now)
            vehicle.last_accepted_at = scheduler.now
            metrics.applied_commands += 1
        except meta_action.CommandRejected as exc:
            metrics.rejected_commands.append(
                f"t={scheduler.now:.1f} vehicle={vehicle.state.vehicle_id}: {exc}"
            )

    def make_timeline_fn(event):
        def fire():
            if event.kind == "create_advisory":
                record = core.create_advisory(**event.payload)
                metrics.advisory_marks.append(
                    (scheduler.now, record.advisory_id, record.speed_mps)
                )
            elif event.kind == "cancel_advisory":
                core.cancel_advisory(int(event.payload))
            elif event.kind == "metaaction_text":
                targets = (
                    [v for v in vehicles if v.state.vehicle_id == event.vehicle_id]
                    if event.vehicle_id is not None
                    else vehicles
                )
                for vehicle in targets:
                    run_metaaction(str(event.payload), vehicle)
            elif event.kind == "feed_update":
                path = str(event.payload)
                if not os.path.isabs(path):
                    path = os.path.join(scenario.base_dir, path)
                core.ingest_feed_source(path)
        return fire

    for event in scenario.timeline:
        scheduler.schedule(event.at_s, make_timeline_fn(event))
    for vehicle in vehicles:
        scheduler.schedule(0.0, vehicle.on_tick)

    scheduler.run_until(scenario.duration_s)

    # Compliance per (advisory, vehicle) from the recorded speed traces.
    for row in metrics.deliveries:
        if row.speed_mps is None:
            continue
        row.compliance_s = compliance_time(
            metrics.traces[row.vehicle_id], row.speed_mps, row.receipt_at_s
        )
    metrics.deliveries.sort(key=lambda r: (r.advisory_id, r.vehicle_id))

    if out_dir:
        from . import report

        report.write_metrics_csv(
            metrics, os.path.join(out_dir, scenario.metrics_filename)
        )
        report.write_summary_json(metrics, os.path.join(out_dir, "summary.json"))
        if figures:
            report.render_figures(metrics, out_dir)
    return metrics
