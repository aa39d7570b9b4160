"""Wall-clock fleet agents for live demos: real broker connections, real
timers, link impairment approximated with delayed sends and drop sampling."""

from __future__ import annotations

import datetime
import json
import logging
import random
import threading
import time

from . import wire_codec
from .link_sim import LinkProfile
from .transport.client import BrokerClient
from .transport.protocol import QOS_BEST_EFFORT
from .vehicle_agent import (
    BSM_INTERVAL_S,
    ControlLaw,
    Route,
    VehicleState,
    bsm_snapshot,
    on_advisory,
    tick,
)

logger = logging.getLogger(__name__)

__all__ = ["LiveVehicle", "LiveFleet", "load_route_file", "minute_zero_epoch_s"]


def load_route_file(path) -> Route:
    with open(path) as fh:
        doc = json.load(fh)
    return Route.from_dicts(doc["segments"])


def minute_zero_epoch_s(now=None) -> float:
    """Epoch seconds at minute-of-year zero (start of the current UTC year)."""
    now = time.time() if now is None else now
    year = datetime.datetime.fromtimestamp(now, datetime.timezone.utc).year
    return datetime.datetime(year, 1, 1, tzinfo=datetime.timezone.utc).timestamp()


class LiveVehicle:
    def __init__(self, vehicle_id, route, broker_addr, region="fl",
                 driver_set_speed_mps=30.0, odometer_m=0.0,
                 profile: LinkProfile | None = None, seed=0):
        self.state = VehicleState(
            vehicle_id=vehicle_id,
            route=route,
            odometer_m=odometer_m,
            speed_mps=driver_set_speed_mps,
            driver_set_speed_mps=driver_set_speed_mps,
        )
        self.law = ControlLaw()
        self.region = region
        self.profile = profile
        self._rng = random.Random(seed)
        self._client = BrokerClient(
            broker_addr[0], broker_addr[1], client_id=f"veh-{vehicle_id}"
        )
        self._client.subscribe(self._adv_pattern(), on_message=self._on_envelope)
        self._subscribed = self.state.current_segment_id
        self._running = False
        self._thread = None

    def _adv_pattern(self):
        return f"cda/{self.region}/adv/{self.state.current_segment_id}"

    def _on_envelope(self, envelope):
        try:
            frame, payload = wire_codec.decode_frame(envelope.body)
        except wire_codec.CodecError:
            return
        if frame.msg_type == wire_codec.MSG_TYPE_ADVISORY:
            on_advisory(self.state, payload, time.time())

    def _maybe_resubscribe(self):
        segment_id = self.state.current_segment_id
        if segment_id != self._subscribed:
            self._client.unsubscribe(f"cda/{self.region}/adv/{self._subscribed}")
            self._subscribed = segment_id
            self._client.subscribe(self._adv_pattern())

    def _publish_bsm(self, frame):
        topic = f"cda/{self.region}/veh/{self.state.vehicle_id}/bsm"
        try:
            self._client.publish(topic, frame, qos=QOS_BEST_EFFORT)
        except (ConnectionError, OSError):
            pass

    def _loop(self):
        next_tick = time.monotonic()
        while self._running:
            now = time.time()
            payload = bsm_snapshot(self.state, now)
            frame = wire_codec.encode_frame(payload)
            if self.profile is None:
                self._publish_bsm(frame)
            elif self._rng.random() >= self.profile.loss_rate:
                delay = self._rng.uniform(
                    self.profile.latency_min_ms, self.profile.latency_max_ms
                ) / 1000.0
                threading.Timer(delay, self._publish_bsm, args=(frame,)).start()
            tick(self.state, self.law, now)
            self._maybe_resubscribe()
            next_tick += BSM_INTERVAL_S
            time.sleep(max(0.0, next_tick - time.monotonic()))

    def start(self):
        self._running = True
        self._thread = threading.Thread(
            target=self._loop, name=f"vehicle-{self.state.vehicle_id}", daemon=True
        )
        self._thread.start()
        return self

    def stop(self):
        self._running = False
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._client.close()


class LiveFleet:
    def __init__(self, n, route, broker_addr, region="fl", profile=None, seed=0,
                 driver_set_speed_mps=30.0, spacing_m=50.0):
        self.vehicles = [
            LiveVehicle(
                vehicle_id=i + 1,
                route=route,
                broker_addr=broker_addr,
                region=region,
                driver_set_speed_mps=driver_set_speed_mps,
                odometer_m=min(i * spacing_m, route.length_m),
                profile=profile,
                seed=seed * 1000003 + i,
            )
            for i in range(n)
        ]

    def start(self):
        for vehicle in self.vehicles:
            vehicle.start()
        logger.info("started %d live vehicles", len(self.vehicles))
        return self

    def stop(self):
        for vehicle in self.vehicles:
            vehicle.stop()
