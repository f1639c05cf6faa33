"""Framed byte transport with application-layer network emulation.

Frames are [4-byte length][1-byte type][8-byte departure stamp][payload],
length covering everything after itself.  Emulation happens entirely at
this layer: the sender charges each frame's full wire size against a
bandwidth meter and blocks until the frame would have drained, and the
receiver holds a frame until its departure stamp plus the one-way delay.
Both ends must therefore share a monotonic clock, i.e. run on the same
machine; across real machines use the lan profile and let the actual
network do its thing.

Metrics count payload bytes only, so accounting is identical across
profiles.  round_trips counts send-to-receive direction flips seen by
this endpoint.
"""

from __future__ import annotations

import os
import socket
import struct
import time
from dataclasses import dataclass, field

from .errors import InvalidInput, ProtocolError, TransportError

HELLO = 1
RECORD = 2
OT_MSG = 3
GC_STREAM = 4
OUTPUT = 5
ABORT = 6

FRAME_TYPES = {HELLO: "HELLO", RECORD: "RECORD", OT_MSG: "OT_MSG",
               GC_STREAM: "GC_STREAM", OUTPUT: "OUTPUT", ABORT: "ABORT"}

_HEADER = struct.Struct(">IBQ")
_MAX_FRAME = (1 << 31) - 1

ABORT_PARAMS = 1
ABORT_INTEGRITY = 2
ABORT_INTERNAL = 3
ABORT_AUTH = 4


class PeerAbort(ProtocolError):
    """The peer sent an ABORT frame; code tells why."""

    def __init__(self, code: int, reason: str):
        super().__init__(f"peer aborted ({code}): {reason}")
        self.code = code
        self.reason = reason


@dataclass(frozen=True)
class NetProfile:
    name: str
    bandwidth_bits_per_s: int  # 0 means unlimited
    one_way_delay_ms: float


PROFILES = {
    "lan": NetProfile("lan", 0, 0.0),
    "wan1": NetProfile("wan1", 1_000_000_000, 10.0),
    "wan2": NetProfile("wan2", 100_000_000, 50.0),
}

PROFILE_ENV = "SPC_NET_PROFILE"


def get_profile(name: str | None = None) -> NetProfile:
    """Resolve a profile by name, falling back to $SPC_NET_PROFILE, then lan."""
    if name is None:
        name = os.environ.get(PROFILE_ENV, "lan")
    profile = PROFILES.get(name)
    if profile is None:
        raise InvalidInput(f"unknown network profile {name!r}")
    return profile


@dataclass
class SessionMetrics:
    bytes_sent: int = 0
    bytes_received: int = 0
    wall_time_ms: float = 0.0
    round_trips: int = 0
    frames: dict = field(default_factory=dict)  # type name -> payload bytes

    def note(self, ftype: int, n: int):
        name = FRAME_TYPES.get(ftype, str(ftype))
        self.frames[name] = self.frames.get(name, 0) + n


def _sleep_until(deadline_ns: int):
    while True:
        rest = deadline_ns - time.monotonic_ns()
        if rest <= 0:
            return
        time.sleep(rest / 1e9)


class Channel:
    """One framed duplex connection with shaping and byte accounting."""

    def __init__(self, sock: socket.socket, profile: NetProfile):
        self._sock = sock
        self.profile = profile
        self.metrics = SessionMetrics()
        self.frame_log = []  # ("send"|"recv", type, payload length)
        self._tx_free_at = 0  # ns; when the emulated link next idles
        self._t0 = time.monotonic_ns()
        self._last_was_send = False

    def _touch(self):
        self.metrics.wall_time_ms = (time.monotonic_ns() - self._t0) / 1e6

    def send(self, ftype: int, payload: bytes = b""):
        if len(payload) > _MAX_FRAME - 9:
            raise InvalidInput("frame payload too large")
        wire = _HEADER.size + len(payload)
        now = time.monotonic_ns()
        rate = self.profile.bandwidth_bits_per_s
        if rate:
            departure = max(self._tx_free_at, now) + (wire * 8 * 10**9) // rate
        else:
            departure = now
        self._tx_free_at = departure
        header = _HEADER.pack(len(payload) + 9, ftype, departure)
        try:
            self._sock.sendall(header + payload)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc
        _sleep_until(departure)
        self.metrics.bytes_sent += len(payload)
        self.metrics.note(ftype, len(payload))
        self.frame_log.append(("send", ftype, len(payload)))
        self._last_was_send = True
        self._touch()

    def _read_exact(self, n: int) -> bytes:
        chunks = []
        while n:
            try:
                chunk = self._sock.recv(min(n, 1 << 20))
            except socket.timeout as exc:
                raise TransportError("receive timed out") from exc
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from exc
            if not chunk:
                raise TransportError("peer closed the connection")
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)

    def recv(self) -> tuple[int, bytes]:
        head = self._read_exact(4)
        (length,) = struct.unpack(">I", head)
        if not 9 <= length <= _MAX_FRAME:
            raise ProtocolError(f"invalid frame length {length}")
        body = self._read_exact(length)
        ftype, departure = struct.unpack(">BQ", body[:9])
        payload = body[9:]
        delay = self.profile.one_way_delay_ms
        if delay:
            _sleep_until(departure + int(delay * 1e6))
        if self._last_was_send:
            self.metrics.round_trips += 1
            self._last_was_send = False
        self.metrics.bytes_received += len(payload)
        self.metrics.note(ftype, len(payload))
        self.frame_log.append(("recv", ftype, len(payload)))
        self._touch()
        return ftype, payload

    def recv_expect(self, ftype: int) -> bytes:
        got, payload = self.recv()
        if got == ftype:
            return payload
        if got == ABORT:
            code = payload[0] if payload else ABORT_INTERNAL
            raise PeerAbort(code, payload[1:].decode("utf-8", "replace"))
        raise ProtocolError(
            f"expected {FRAME_TYPES.get(ftype, ftype)} frame, got "
            f"{FRAME_TYPES.get(got, got)}")

    def abort(self, code: int, reason: str):
        try:
            self.send(ABORT, bytes([code]) + reason.encode())
        except TransportError:
            pass

    def close(self):
        self._touch()
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise InvalidInput(f"endpoint must be host:port, got {endpoint!r}")
    return host or "127.0.0.1", int(port)


def connect(endpoint: str, profile: NetProfile | None = None,
            timeout: float = 10.0) -> Channel:
    host, port = _parse_endpoint(endpoint)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {endpoint}: {exc}") from exc
    sock.settimeout(timeout)
    return Channel(sock, profile or get_profile())


class Listener:
    def __init__(self, endpoint: str):
        host, port = _parse_endpoint(endpoint)
        try:
            self._sock = socket.create_server((host, port))
        except OSError as exc:
            raise TransportError(f"cannot listen on {endpoint}: {exc}") from exc

    @property
    def endpoint(self) -> str:
        host, port = self._sock.getsockname()[:2]
        return f"{host}:{port}"

    def accept(self, profile: NetProfile | None = None,
               timeout: float = 10.0) -> Channel:
        self._sock.settimeout(timeout)
        try:
            conn, _ = self._sock.accept()
        except socket.timeout as exc:
            raise TransportError("accept timed out") from exc
        conn.settimeout(timeout)
        return Channel(conn, profile or get_profile())

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def pair(profile: NetProfile | None = None,
         timeout: float = 60.0) -> tuple[Channel, Channel]:
    """In-process connected channel pair, mostly for tests and benchmarks."""
    a, b = socket.socketpair()
    a.settimeout(timeout)
    b.settimeout(timeout)
    p = profile or get_profile()
    return Channel(a, p), Channel(b, p)
