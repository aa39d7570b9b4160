"""Connectionless low-latency channel carrying raw codec frames over UDP.

The receive path validates each datagram as a complete CRC-protected
frame; anything corrupt is dropped silently and counted. Stands in for a
lightweight stream transport on the high-rate vehicle broadcast path.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass

from .. import wire_codec

__all__ = ["DatagramChannel", "DatagramStats", "FrameTooLargeError", "DEFAULT_UDP_PORT"]

DEFAULT_UDP_PORT = 7321
MAX_DATAGRAM = 1200


class FrameTooLargeError(ValueError):
    pass


@dataclass
class DatagramStats:
    sent: int = 0
    received: int = 0
    corrupt_dropped: int = 0


class DatagramChannel:
    def __init__(self, host="127.0.0.1", port=0, recv_buffer=1 << 22):
        self.stats = DatagramStats()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, recv_buffer)
        self._sock.bind((host, port))

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def send(self, addr: tuple[str, int], frame: bytes):
        if len(frame) > MAX_DATAGRAM:
            raise FrameTooLargeError(
                f"{len(frame)} bytes exceeds {MAX_DATAGRAM}-byte datagram limit"
            )
        self._sock.sendto(frame, addr)
        self.stats.sent += 1

    def recv(self, timeout=None):
        """Next valid frame as ``(frame_bytes, payload, sender)``; None on timeout.

        Datagrams that fail frame validation (bad CRC, truncation, bad
        fields) are dropped and counted, never surfaced.
        """
        self._sock.settimeout(timeout)
        while True:
            try:
                data, sender = self._sock.recvfrom(65535)
            except (socket.timeout, TimeoutError):
                return None
            except OSError:
                return None
            try:
                _, payload = wire_codec.decode_frame(data)
            except wire_codec.CodecError:
                self.stats.corrupt_dropped += 1
                continue
            self.stats.received += 1
            return data, payload, sender

    def close(self):
        self._sock.close()
