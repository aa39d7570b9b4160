"""Seeded network impairment: named latency/loss envelopes per link technology.

Each link owns its own random generator, so a simulation run is a pure
function of (scenario, seed). Sampled delays always stay inside the
profile's closed [latency_min, latency_max] interval; the per-technology
upper bounds are hard invariants. Bandwidth caps are carried as
information only: at 26-byte frames, serialization delay is noise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

__all__ = ["LinkProfile", "ImpairedLink", "builtin_profile", "profile_from_config"]


@dataclass(frozen=True)
class LinkProfile:
    name: str
    latency_min_ms: float
    latency_max_ms: float
    loss_rate: float = 0.0
    bandwidth_bps: float | None = None

    def __post_init__(self):
        if not 0 <= self.latency_min_ms <= self.latency_max_ms:
            raise ValueError(
                f"latency bounds out of order: [{self.latency_min_ms}, {self.latency_max_ms}]"
            )
        if not 0 <= self.loss_rate < 1:
            raise ValueError(f"loss_rate {self.loss_rate} outside [0, 1)")


_BUILTIN = {
    "wifi6": LinkProfile("wifi6", 1.0, 10.0, 0.0, 4.3e9),
    "wifi4": LinkProfile("wifi4", 5.0, 50.0, 0.0, 100e6),
    "lte": LinkProfile("lte", 20.0, 100.0, 0.0, 50e6),
    "loopback": LinkProfile("loopback", 0.0, 0.0, 0.0, None),
}


def builtin_profile(name: str) -> LinkProfile:
    try:
        return _BUILTIN[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown link profile {name!r}; known: {', '.join(sorted(_BUILTIN))}"
        )


def profile_from_config(config) -> LinkProfile:
    """Profile from a name or a dict overriding a named profile's fields."""
    if isinstance(config, str):
        return builtin_profile(config)
    base = builtin_profile(config.get("name", "loopback"))
    return LinkProfile(
        name=base.name,
        latency_min_ms=config.get("latency_min_ms", base.latency_min_ms),
        latency_max_ms=config.get("latency_max_ms", base.latency_max_ms),
        loss_rate=config.get("loss_rate", base.loss_rate),
        bandwidth_bps=config.get("bandwidth_bps", base.bandwidth_bps),
    )


class ImpairedLink:
    """One directed hop with seeded uniform delay and Bernoulli loss."""

    def __init__(self, profile: LinkProfile, seed: int):
        self.profile = profile
        self.seed = seed
        self._rng = random.Random(seed)
        self.sent = 0
        self.dropped = 0

    def sample_delay_ms(self) -> float:
        return self._rng.uniform(self.profile.latency_min_ms, self.profile.latency_max_ms)

    def transmit(self, now_s: float, reliable: bool = False) -> float | None:
        """Delivery time in seconds, or None when the frame is lost.

        Reliable hops (stream-like transports that retransmit below the
        app layer) never lose frames; loss impairs only datagram traffic.
        """
        self.sent += 1
        if not reliable and self.profile.loss_rate > 0:
            if self._rng.random() < self.profile.loss_rate:
                self.dropped += 1
                return None
        return now_s + self.sample_delay_ms() / 1000.0
