"""Command parsing, envelope validation, application, and fuzz safety closure."""

import random
import string

import pytest

from cdastack import meta_action as ma
from cdastack.vehicle_agent import Route, RouteSegment, VehicleState

SEG = RouteSegment(12, 27.95, -82.45, 28.04, -82.45, 10000.0)


def make_state(driver=30.0):
    return VehicleState(
        vehicle_id=1,
        route=Route([SEG]),
        speed_mps=driver,
        driver_set_speed_mps=driver,
    )


def block(*lines):
    return "```metaaction\n" + "\n".join(lines) + "\n```"


# -- parse ----------------------------------------------------------------------


def test_parse_follow_gap():
    text = "Sure, easing off.\n" + block("action: SetFollowGap", "gap_s: 2.5")
    command = ma.parse_command(text)
    assert command.action is ma.Action.SET_FOLLOW_GAP
    assert command.params == {"gap_s": 2.5}


def test_parse_ignores_surrounding_prose():
    text = "thinking...\n" + block("action: SetCruiseSpeed", "speed_mps: 25") + "\ndone."
    assert ma.parse_command(text).params["speed_mps"] == 25.0


def test_parse_no_block():
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.parse_command("slow down please")
    assert exc_info.value.reason is ma.RejectionReason.NO_BLOCK


def test_parse_multiple_blocks():
    text = block("action: SetFollowGap", "gap_s: 2") + "\n" + block(
        "action: SetFollowGap", "gap_s: 3"
    )
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.parse_command(text)
    assert exc_info.value.reason is ma.RejectionReason.MULTIPLE_BLOCKS


def test_parse_unknown_action():
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.parse_command(block("action: LaunchMissiles", "target: moon"))
    assert exc_info.value.reason is ma.RejectionReason.UNKNOWN_ACTION


def test_parse_missing_param():
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.parse_command(block("action: SetFollowGap"))
    assert exc_info.value.reason is ma.RejectionReason.MISSING_PARAM


def test_parse_mistyped_param():
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.parse_command(block("action: SetFollowGap", "gap_s: very close"))
    assert exc_info.value.reason is ma.RejectionReason.BAD_PARAM


def test_parse_unexpected_param():
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.parse_command(
            block("action: SetFollowGap", "gap_s: 2.0", "afterburner: on")
        )
    assert exc_info.value.reason is ma.RejectionReason.BAD_PARAM


def test_parse_unterminated_block():
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.parse_command("```metaaction\naction: SetFollowGap")
    assert exc_info.value.reason is ma.RejectionReason.MALFORMED_BLOCK


def test_parse_notice_text_may_contain_colons():
    command = ma.parse_command(
        block("action: DriverNotice", "text: congestion ahead: I-275 NB", "severity: warn")
    )
    assert command.params["text"] == "congestion ahead: I-275 NB"
    assert command.params["severity"] == "warn"


def test_parse_segment_id_must_be_integer():
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.parse_command(
            block("action: CancelAdvisory", "segment_id: 12.5")
        )
    assert exc_info.value.reason is ma.RejectionReason.BAD_PARAM


# -- validate --------------------------------------------------------------------


def test_validate_speed_out_of_envelope():
    command = ma.parse_command(block("action: SetCruiseSpeed", "speed_mps: 80.0"))
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.validate(command, ma.SafetyEnvelope(), None, now=0.0)
    assert exc_info.value.reason is ma.RejectionReason.OUT_OF_RANGE


def test_validate_rate_limit():
    command = ma.parse_command(block("action: SetFollowGap", "gap_s: 2.5"))
    envelope = ma.SafetyEnvelope()
    first = ma.validate(command, envelope, None, now=10.0)
    assert isinstance(first, ma.ValidatedCommand)
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.validate(command, envelope, last_accepted_at=10.0, now=10.2)
    assert exc_info.value.reason is ma.RejectionReason.RATE_LIMITED
    assert ma.validate(command, envelope, last_accepted_at=10.0, now=11.5)


def test_validate_gap_in_range():
    command = ma.parse_command(block("action: SetFollowGap", "gap_s: 2.5"))
    validated = ma.validate(command, ma.SafetyEnvelope(), None, now=0.0)
    assert validated.command.params["gap_s"] == 2.5


def test_validate_notice_length():
    long_text = "x" * 500
    command = ma.parse_command(
        block("action: DriverNotice", f"text: {long_text}", "severity: info")
    )
    with pytest.raises(ma.CommandRejected) as exc_info:
        ma.validate(command, ma.SafetyEnvelope(), None, now=0.0)
    assert exc_info.value.reason is ma.RejectionReason.OUT_OF_RANGE


def test_envelope_invariants():
    with pytest.raises(ValueError):
        ma.SafetyEnvelope(speed_min_mps=10.0, speed_max_mps=5.0)
    with pytest.raises(ValueError):
        ma.SafetyEnvelope(rate_limit_s=-1.0)


# -- apply ------------------------------------------------------------------------


def run_pipeline(text, state, envelope=None, last=None, now=0.0):
    envelope = envelope or ma.SafetyEnvelope()
    command = ma.parse_command(text)
    validated = ma.validate(command, envelope, last, now)
    return ma.apply(validated, state)


def test_apply_cruise_speed_converges():
    state = make_state(driver=30.0)
    run_pipeline(block("action: SetCruiseSpeed", "speed_mps: 25"), state)
    assert state.driver_set_speed_mps == 25.0


def test_apply_driver_notice_no_kinematics_change():
    state = make_state()
    before = (state.speed_mps, state.driver_set_speed_mps, state.odometer_m)
    run_pipeline(
        block("action: DriverNotice", "text: congestion ahead", "severity: info"), state
    )
    assert state.notices == [("info", "congestion ahead")]
    assert (state.speed_mps, state.driver_set_speed_mps, state.odometer_m) == before


def test_apply_advisory_then_cancel():
    state = make_state(driver=30.0)
    run_pipeline(
        block(
            "action: ApplyAdvisorySpeed",
            "segment_id: 12",
            "speed_mps: 20",
            "duration_s: 600",
        ),
        state,
        now=0.0,
    )
    from cdastack.vehicle_agent import effective_target

    assert effective_target(state, 0.0) == pytest.approx(20.0)
    run_pipeline(
        block("action: CancelAdvisory", "segment_id: 12"), state, now=5.0
    )
    assert effective_target(state, 5.0) == pytest.approx(30.0)


def test_apply_follow_gap_stored():
    state = make_state()
    run_pipeline(block("action: SetFollowGap", "gap_s: 2.5"), state)
    assert state.follow_gap_s == 2.5


# -- fuzz safety closure --------------------------------------------------------------


NEAR_VALID_TEMPLATES = [
    "action: SetCruiseSpeed\nspeed_mps: {}",
    "action: SetFollowGap\ngap_s: {}",
    "action: ApplyAdvisorySpeed\nsegment_id: {}\nspeed_mps: {}\nduration_s: {}",
    "action: CancelAdvisory\nsegment_id: {}",
    "action: DriverNotice\ntext: {}\nseverity: {}",
]

MUTATIONS = ["", "```metaaction", "```", "action:", "\x00", "🚗", "speed_mps: nan",
             "speed_mps: inf", "gap_s: -1e308", "segment_id: 99999999999999999999"]


def fuzz_corpus(n, seed=1337):
    rng = random.Random(seed)
    corpus = []
    for _ in range(n):
        roll = rng.random()
        if roll < 0.4:
            length = rng.randint(0, 200)
            corpus.append(
                "".join(chr(rng.randint(0, 0x10FFFF if rng.random() < 0.1 else 255))
                        for _ in range(length))
            )
        elif roll < 0.8:
            template = rng.choice(NEAR_VALID_TEMPLATES)
            args = [
                rng.choice(
                    [
                        str(rng.uniform(-1e6, 1e6)),
                        str(rng.randint(-10**12, 10**12)),
                        "".join(rng.choices(string.printable, k=rng.randint(0, 30))),
                        "nan",
                        "inf",
                    ]
                )
                for _ in range(template.count("{}"))
            ]
            body = template.format(*args)
            wrapped = rng.choice(
                ["```metaaction\n{}\n```", "{}", "```metaaction\n{}", "```metaaction\n{}\n```\n```metaaction\naction: SetFollowGap\ngap_s: 2\n```"]
            ).format(body)
            corpus.append("noise " + wrapped + " noise")
        else:
            base = "```metaaction\naction: SetCruiseSpeed\nspeed_mps: 25\n```"
            chars = list(base)
            for _ in range(rng.randint(1, 6)):
                mutation = rng.choice(MUTATIONS)
                at = rng.randint(0, len(chars))
                chars[at:at] = list(mutation)
            corpus.append("".join(chars))
    return corpus


def test_fuzz_safety_closure_10k():
    envelope = ma.SafetyEnvelope()
    state = make_state(driver=30.0)
    last_accepted = None
    now = 0.0
    outcomes = {"applied": 0, "rejected": 0}
    for text in fuzz_corpus(10_000):
        now += 2.0  # outrun the rate limiter so range checks stay exercised
        try:
            command = ma.parse_command(text)
            validated = ma.validate(command, envelope, last_accepted, now)
            ma.apply(validated, state, now)
            last_accepted = now
            outcomes["applied"] += 1
        except ma.CommandRejected:
            outcomes["rejected"] += 1
        # Setpoints never leave the envelope.
        assert 0.0 <= state.driver_set_speed_mps <= envelope.speed_max_mps
        if state.follow_gap_s is not None:
            assert envelope.gap_min_s <= state.follow_gap_s <= envelope.gap_max_s
        if state.active_advisory is not None:
            advisory, _ = state.active_advisory
            assert advisory.advisory_speed * 0.02 <= envelope.speed_max_mps + 0.01
        for _, text_notice in state.notices:
            assert len(text_notice) <= envelope.notice_max_len
    assert outcomes["applied"] + outcomes["rejected"] == 10_000
    assert outcomes["applied"] > 0
    assert outcomes["rejected"] > 0


def test_rejection_monotonic_under_envelope_widening():
    rng = random.Random(7)
    narrow = ma.SafetyEnvelope(
        speed_min_mps=5.0, speed_max_mps=30.0, gap_min_s=1.0, gap_max_s=3.0,
        rate_limit_s=1.0, notice_max_len=100,
    )
    wide = ma.SafetyEnvelope(
        speed_min_mps=0.0, speed_max_mps=38.0, gap_min_s=0.8, gap_max_s=4.0,
        rate_limit_s=0.5, notice_max_len=200,
    )
    for _ in range(500):
        kind = rng.randrange(3)
        if kind == 0:
            text = block(f"action: SetCruiseSpeed", f"speed_mps: {rng.uniform(-5, 45):.2f}")
        elif kind == 1:
            text = block(f"action: SetFollowGap", f"gap_s: {rng.uniform(0, 6):.2f}")
        else:
            text = block(
                "action: DriverNotice",
                f"text: {'n' * rng.randint(0, 250)}",
                "severity: info",
            )
        command = ma.parse_command(text)
        try:
            ma.validate(command, narrow, None, now=10.0)
            accepted_narrow = True
        except ma.CommandRejected:
            accepted_narrow = False
        try:
            ma.validate(command, wide, None, now=10.0)
            accepted_wide = True
        except ma.CommandRejected:
            accepted_wide = False
        if accepted_narrow:
            assert accepted_wide
