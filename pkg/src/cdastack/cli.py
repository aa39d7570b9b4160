"""Single entry point: broker, service, live fleet, advisory client, codec
tool, and the seeded scenario runner."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
import time

import requests

from . import wire_codec
from .link_sim import builtin_profile
from .live import LiveFleet, load_route_file
from .service.app import serve_http
from .service.core import ServiceCore
from .service.store import ValidationError
from .sim import load_scenario, run_scenario
from .sim.scenario import ScenarioError
from .transport.broker import Broker, DEFAULT_PORT
from .transport.client import BrokerClient
from .transport.datagram import DEFAULT_UDP_PORT, DatagramChannel
from .transport.protocol import QOS_AT_LEAST_ONCE

DEFAULT_SERVICE_URL = "http://127.0.0.1:8080"


def _wait_forever():
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            signal.signal(sig, lambda *_: stop.set())
        except ValueError:
            break
    try:
        while not stop.wait(0.5):
            pass
    except KeyboardInterrupt:
        pass


def cmd_broker(args) -> int:
    broker = Broker(host=args.host, port=args.port)
    try:
        broker.start()
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"broker listening on {broker.host}:{broker.port}")
    _wait_forever()
    broker.stop()
    return 0


def cmd_serve(args) -> int:
    broker = None
    if args.embedded_broker:
        host, port = _parse_hostport(args.broker)
        broker = Broker(host=host, port=port).start()
        print(f"embedded broker on {broker.host}:{broker.port}")

    segments = None
    route = None
    if args.routes:
        route = load_route_file(args.routes)
        segments = route.segments

    host, port = _parse_hostport(args.broker)
    client = BrokerClient(host, port, client_id="advisory-service")

    def publish_fn(topic, frame):
        handle = client.publish(topic, frame, qos=QOS_AT_LEAST_ONCE, retain=True)
        handle.wait(timeout=5.0)

    core = ServiceCore(
        args.log, region=args.region, publish_fn=publish_fn, segments=segments
    )

    def on_envelope(envelope):
        try:
            frame, payload = wire_codec.decode_frame(envelope.body)
        except wire_codec.CodecError:
            core.ignored_bsm += 1
            return
        if frame.msg_type == wire_codec.MSG_TYPE_BSM:
            core.handle_bsm(payload)

    client.subscribe(f"cda/{args.region}/veh/+/bsm", on_message=on_envelope)

    republished = core.store.republish_pending()
    if republished:
        print(f"republished {republished} pending advisories")

    if args.feed:
        try:
            events, diagnostics = core.ingest_feed_source(args.feed)
            print(f"feed: {len(events)} events, {len(diagnostics)} skipped")
        except Exception as exc:
            print(f"feed ingest failed: {exc}", file=sys.stderr)

    udp = None
    if args.udp_port is not None:
        udp = DatagramChannel(host=args.host, port=args.udp_port)

        def udp_loop():
            while True:
                result = udp.recv(timeout=1.0)
                if result is None:
                    continue
                _, payload, _ = result
                if isinstance(payload, wire_codec.BsmPayload):
                    core.handle_bsm(payload)

        threading.Thread(target=udp_loop, daemon=True).start()
        print(f"datagram listener on {udp.address[0]}:{udp.address[1]}")

    server = serve_http(core, host=args.host, port=args.http_port)
    print(f"service listening on http://{args.host}:{server.server_address[1]}")

    fleet = None
    if args.fleet:
        if route is None:
            print("--fleet requires --routes", file=sys.stderr)
            return 2
        profile = builtin_profile(args.profile) if args.profile else None
        fleet = LiveFleet(
            args.fleet,
            route,
            (host, port),
            region=args.region,
            profile=profile,
            seed=args.seed,
            driver_set_speed_mps=args.speed,
        ).start()
        print(f"live fleet of {args.fleet} vehicles running")

    _wait_forever()
    if fleet:
        fleet.stop()
    server.shutdown()
    client.close()
    if udp:
        udp.close()
    if broker:
        broker.stop()
    return 0


def cmd_fleet(args) -> int:
    route = load_route_file(args.routes)
    host, port = _parse_hostport(args.broker)
    profile = builtin_profile(args.profile) if args.profile else None
    fleet = LiveFleet(
        args.n,
        route,
        (host, port),
        region=args.region,
        profile=profile,
        seed=args.seed,
        driver_set_speed_mps=args.speed,
    ).start()
    print(f"{args.n} vehicles publishing at 10 Hz (Ctrl-C to stop)")
    if args.duration:
        time.sleep(args.duration)
    else:
        _wait_forever()
    fleet.stop()
    return 0


def cmd_advise(args) -> int:
    url = args.service.rstrip("/") + "/advisories"
    body = {
        "segment_id": args.segment,
        "speed_mps": args.speed,
        "duration_s": args.duration,
        "cause": args.cause,
    }
    try:
        response = requests.post(url, json=body, timeout=10.0)
    except requests.RequestException as exc:
        print(f"cannot reach service: {exc}", file=sys.stderr)
        return 1
    if response.status_code != 201:
        print(f"error {response.status_code}: {response.text}", file=sys.stderr)
        return 1
    record = response.json()
    print(f"created advisory {record['advisory_id']}")
    print(json.dumps(record, indent=2))
    return 0


_PAYLOAD_BUILDERS = {
    "bsm": wire_codec.BsmPayload,
    "advisory": wire_codec.AdvisoryPayload,
    "toll": wire_codec.TollPayload,
}

_TYPE_NAMES = {
    wire_codec.MSG_TYPE_BSM: "bsm",
    wire_codec.MSG_TYPE_ADVISORY: "advisory",
    wire_codec.MSG_TYPE_TOLL: "toll",
}


def cmd_codec(args) -> int:
    if args.action == "encode":
        raw = sys.stdin.read() if args.input == "-" else open(args.input).read()
        try:
            doc = json.loads(raw)
            builder = _PAYLOAD_BUILDERS[doc.pop("type")]
            frame = wire_codec.encode_frame(builder(**doc))
        except KeyError as exc:
            print(f"unknown or missing message type: {exc}", file=sys.stderr)
            return 1
        except (json.JSONDecodeError, TypeError) as exc:
            print(f"bad input document: {exc}", file=sys.stderr)
            return 1
        except wire_codec.CodecError as exc:
            print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        print(frame.hex())
        return 0

    hex_text = sys.stdin.read() if args.input == "-" else args.input
    try:
        data = bytes.fromhex("".join(hex_text.split()))
    except ValueError as exc:
        print(f"bad hex: {exc}", file=sys.stderr)
        return 1
    try:
        frame, payload = wire_codec.decode_frame(data)
    except wire_codec.CodecError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"type: {_TYPE_NAMES[frame.msg_type]} ({frame.msg_type})")
    print(f"crc: 0x{frame.crc:04X} (ok)")
    for name, value in wire_codec.payload_fields(payload).items():
        print(f"{name}: {value}")
    return 0


def cmd_scenario(args) -> int:
    try:
        scenario = load_scenario(args.file)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    out_dir = args.out or "scenario_out"
    metrics = run_scenario(scenario, out_dir=out_dir, figures=not args.no_figures)
    summary = metrics.summary()
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"metrics written to {out_dir}/{scenario.metrics_filename}")
    if metrics.rejected_commands:
        for line in metrics.rejected_commands:
            print(f"rejected command: {line}", file=sys.stderr)
    return 0


def _parse_hostport(text, default_port=DEFAULT_PORT):
    if ":" in text:
        host, port = text.rsplit(":", 1)
        return host, int(port)
    return text, default_port


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cda",
        description="Desk-scale cooperative driving automation stack",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("broker", help="run the pub/sub broker")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.set_defaults(fn=cmd_broker)

    p = sub.add_parser("serve", help="run the advisory service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--http-port", type=int, default=8080)
    p.add_argument("--broker", default=f"127.0.0.1:{DEFAULT_PORT}")
    p.add_argument("--embedded-broker", action="store_true",
                   help="start the broker inside this process")
    p.add_argument("--region", default="fl")
    p.add_argument("--feed", help="traffic feed file or URL")
    p.add_argument("--log", default="advisories.log", help="write-ahead log path")
    p.add_argument("--routes", help="segment geometry for fleet view")
    p.add_argument("--udp-port", type=int, help="also listen for BSM datagrams")
    p.add_argument("--fleet", type=int, metavar="N",
                   help="also run N live vehicles in this process")
    p.add_argument("--profile", help="impairment profile for the embedded fleet")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speed", type=float, default=30.0,
                   help="driver-set speed for the embedded fleet (m/s)")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("fleet", help="run live simulated vehicles")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--profile")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--routes", required=True)
    p.add_argument("--broker", default=f"127.0.0.1:{DEFAULT_PORT}")
    p.add_argument("--region", default="fl")
    p.add_argument("--speed", type=float, default=30.0)
    p.add_argument("--duration", type=float, help="stop after this many seconds")
    p.set_defaults(fn=cmd_fleet)

    p = sub.add_parser("advise", help="create an advisory via the service")
    p.add_argument("segment", type=int)
    p.add_argument("speed", type=float, help="advisory speed (m/s)")
    p.add_argument("duration", type=float, help="duration (s)")
    p.add_argument("--cause", default="none")
    p.add_argument("--service", default=DEFAULT_SERVICE_URL)
    p.set_defaults(fn=cmd_advise)

    p = sub.add_parser("codec", help="encode/decode wire frames")
    p.add_argument("action", choices=("encode", "decode"))
    p.add_argument("input", help="JSON file (encode) or hex string (decode); '-' for stdin")
    p.set_defaults(fn=cmd_codec)

    p = sub.add_parser("scenario", help="run a seeded scenario")
    p.add_argument("action", choices=("run",))
    p.add_argument("file", help="scenario file path or bundled scenario name")
    p.add_argument("--out", help="output directory (default scenario_out)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_scenario)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
