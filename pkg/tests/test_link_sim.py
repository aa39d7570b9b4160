"""Link impairment: profile envelopes are hard bounds, seeded determinism."""

import pytest

from cdastack.link_sim import ImpairedLink, LinkProfile, builtin_profile, profile_from_config


def test_builtin_profiles_match_published_envelopes():
    wifi6 = builtin_profile("wifi6")
    assert (wifi6.latency_min_ms, wifi6.latency_max_ms) == (1.0, 10.0)
    assert wifi6.bandwidth_bps == 4.3e9
    wifi4 = builtin_profile("wifi4")
    assert (wifi4.latency_min_ms, wifi4.latency_max_ms) == (5.0, 50.0)
    assert wifi4.bandwidth_bps == 100e6
    lte = builtin_profile("lte")
    assert (lte.latency_min_ms, lte.latency_max_ms) == (20.0, 100.0)
    assert lte.bandwidth_bps == 50e6
    loopback = builtin_profile("loopback")
    assert (loopback.latency_min_ms, loopback.latency_max_ms) == (0.0, 0.0)
    assert loopback.loss_rate == 0.0


def test_unknown_profile_name():
    with pytest.raises(ValueError):
        builtin_profile("carrier-pigeon")


def test_profile_invariants():
    with pytest.raises(ValueError):
        LinkProfile("x", 10.0, 5.0)
    with pytest.raises(ValueError):
        LinkProfile("x", 0.0, 1.0, loss_rate=1.0)


def test_profile_from_config_overrides():
    profile = profile_from_config({"name": "lte", "loss_rate": 0.02})
    assert profile.latency_max_ms == 100.0
    assert profile.loss_rate == 0.02
    assert profile_from_config("wifi6").latency_max_ms == 10.0


@pytest.mark.parametrize("name", ["wifi6", "wifi4", "lte"])
def test_10k_samples_within_closed_interval(name):
    profile = builtin_profile(name)
    link = ImpairedLink(profile, seed=1234)
    for _ in range(10_000):
        delay = link.sample_delay_ms()
        assert profile.latency_min_ms <= delay <= profile.latency_max_ms


def test_same_seed_same_sequence():
    a = ImpairedLink(builtin_profile("lte"), seed=77)
    b = ImpairedLink(builtin_profile("lte"), seed=77)
    assert [a.sample_delay_ms() for _ in range(1000)] == [
        b.sample_delay_ms() for _ in range(1000)
    ]


def test_uniform_mean_of_lte_samples():
    link = ImpairedLink(builtin_profile("lte"), seed=9)
    mean = sum(link.sample_delay_ms() for _ in range(10_000)) / 10_000
    assert abs(mean - 60.0) <= 2.0


def test_zero_loss_never_drops():
    link = ImpairedLink(builtin_profile("wifi6"), seed=3)
    assert all(link.transmit(0.0) is not None for _ in range(2000))
    assert link.dropped == 0


def test_two_percent_loss_drop_count_band():
    profile = LinkProfile("lossy", 20.0, 100.0, loss_rate=0.02)
    link = ImpairedLink(profile, seed=4242)
    drops = sum(1 for _ in range(10_000) if link.transmit(0.0) is None)
    assert drops == link.dropped
    assert abs(drops - 200) <= 60


def test_reliable_transmit_never_drops_but_still_delays():
    profile = LinkProfile("lossy", 20.0, 100.0, loss_rate=0.5)
    link = ImpairedLink(profile, seed=5)
    for _ in range(500):
        deliver_at = link.transmit(10.0, reliable=True)
        assert deliver_at is not None
        assert 10.020 <= deliver_at <= 10.100
    assert link.dropped == 0


def test_loopback_is_identity_on_timing():
    link = ImpairedLink(builtin_profile("loopback"), seed=6)
    for _ in range(100):
        assert link.transmit(5.0) == 5.0


def test_independent_delays_can_reorder():
    link = ImpairedLink(builtin_profile("lte"), seed=11)
    arrivals = [link.transmit(t * 0.001) for t in range(200)]
    assert any(later < earlier for earlier, later in zip(arrivals, arrivals[1:]))
