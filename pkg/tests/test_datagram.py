"""UDP datagram channel: loopback delivery, CRC drop behavior, size limit."""

import threading

import pytest

from cdastack import wire_codec as wc
from cdastack.transport.datagram import DatagramChannel, FrameTooLargeError


def make_bsm(vehicle_id, count):
    return wc.BsmPayload(msg_cnt=count % 128, temp_id=vehicle_id, speed=1000)


def test_loopback_send_recv():
    rx = DatagramChannel()
    tx = DatagramChannel()
    frame = wc.encode_frame(make_bsm(7, 1))
    tx.send(rx.address, frame)
    got = rx.recv(timeout=2.0)
    assert got is not None
    data, payload, _ = got
    assert data == frame
    assert payload == make_bsm(7, 1)
    rx.close()
    tx.close()


def test_corrupt_frame_dropped_and_counted():
    rx = DatagramChannel()
    tx = DatagramChannel()
    frame = bytearray(wc.encode_frame(make_bsm(7, 1)))
    frame[10] ^= 0xFF
    tx.send(rx.address, bytes(frame))
    assert rx.recv(timeout=0.3) is None
    assert rx.stats.corrupt_dropped == 1
    assert rx.stats.received == 0
    # A good frame still gets through afterwards.
    good = wc.encode_frame(make_bsm(7, 2))
    tx.send(rx.address, good)
    got = rx.recv(timeout=2.0)
    assert got is not None and got[0] == good
    rx.close()
    tx.close()


def test_oversized_frame_rejected_locally():
    tx = DatagramChannel()
    with pytest.raises(FrameTooLargeError):
        tx.send(("127.0.0.1", 9), bytes(1300))
    assert tx.stats.sent == 0
    tx.close()


def test_bulk_bsm_stream_loopback_delivery_rate():
    """10 vehicles' worth of 10 Hz BSM traffic: >= 99% arrives on loopback."""
    rx = DatagramChannel()
    tx = DatagramChannel()
    total = 1000
    received = []

    def rx_loop():
        while len(received) < total:
            got = rx.recv(timeout=0.5)
            if got is None:
                break
            received.append(got[1])

    thread = threading.Thread(target=rx_loop)
    thread.start()
    for count in range(100):
        for vehicle_id in range(1, 11):
            tx.send(rx.address, wc.encode_frame(make_bsm(vehicle_id, count)))
    thread.join(timeout=10.0)
    assert len(received) >= 0.99 * total
    assert rx.stats.corrupt_dropped == 0
    rx.close()
    tx.close()
