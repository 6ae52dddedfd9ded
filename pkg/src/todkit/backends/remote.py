"""Client for out-of-process generation backends.

The wire format is newline-delimited UTF-8 JSON, one frame per line:

    request   {"id": "...", "context": "..."}
    response  {"id": "...", "text": "..."}
    error     {"id": "...", "error": "..."}

Frames may be answered out of order; the id is the only correlation.  Peers
must ignore keys they do not understand, which leaves room to extend the
protocol without breaking old servers.

Endpoints:
    tcp://HOST:PORT   connect over TCP
    HOST:PORT         same, scheme optional
    stdio:COMMAND     spawn COMMAND and speak over its stdin/stdout
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass, field

from ..errors import BackendTimeout, BackendUnavailable, ConfigError, ProtocolViolation
from .base import BackendRequest, BackendResponse, GenerationBackend


class _TcpTransport:
    def __init__(self, host: str, port: int, connect_timeout: float) -> None:
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise BackendUnavailable(f"cannot connect to {host}:{port}: {exc}") from None
        self._sock.settimeout(None)
        self._reader = self._sock.makefile("rb")

    def write_line(self, data: bytes) -> None:
        try:
            self._sock.sendall(data + b"\n")
        except OSError as exc:
            raise BackendUnavailable(f"send failed: {exc}") from None

    def read_line(self) -> bytes | None:
        line = self._reader.readline()
        return line if line else None

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class _StdioTransport:
    def __init__(self, command: str) -> None:
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot start {command!r}: {exc}") from None

    def write_line(self, data: bytes) -> None:
        if self._proc.poll() is not None:
            raise BackendUnavailable("backend process has exited")
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(data + b"\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise BackendUnavailable(f"send failed: {exc}") from None

    def read_line(self) -> bytes | None:
        assert self._proc.stdout is not None
        line = self._proc.stdout.readline()
        return line if line else None

    def close(self) -> None:
        try:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=3)
        except (OSError, subprocess.TimeoutExpired):
            self._proc.kill()


def parse_endpoint(endpoint: str) -> tuple:
    """Validate an endpoint string without touching the network.

    Returns ("stdio", command) or ("tcp", host, port); raises ConfigError on
    anything else, so address typos fail fast rather than as peer outages.
    """
    if endpoint.startswith("stdio:"):
        command = endpoint[len("stdio:"):]
        if not command.strip():
            raise ConfigError("stdio endpoint needs a command")
        return ("stdio", command)
    hostport = endpoint[len("tcp://"):] if endpoint.startswith("tcp://") else endpoint
    host, sep, port_text = hostport.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"endpoint {endpoint!r} is not tcp://host:port or stdio:command")
    try:
        port = int(port_text)
    except ValueError:
        raise ConfigError(f"endpoint {endpoint!r} has a non-numeric port") from None
    return ("tcp", host, port)


def open_transport(endpoint: str, connect_timeout: float = 10.0):
    parsed = parse_endpoint(endpoint)
    if parsed[0] == "stdio":
        return _StdioTransport(parsed[1])
    return _TcpTransport(parsed[1], parsed[2], connect_timeout)


@dataclass
class _Waiter:
    event: threading.Event = field(default_factory=threading.Event)
    text: str | None = None
    error: Exception | None = None


class RemoteBackend(GenerationBackend):
    """Thread-safe wire-protocol client.

    A single reader thread dispatches incoming frames to waiting callers by
    id, so any number of threads can have requests in flight at once.  Late
    frames for timed-out requests are dropped; frames for ids never issued
    poison the connection as a protocol violation.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        parse_endpoint(endpoint)  # reject malformed addresses immediately
        self._endpoint = endpoint
        self._timeout = timeout
        # The connection is made on first use: an unreachable peer then
        # surfaces as per-request BackendUnavailable, which evaluation
        # tallies as dialogue failures instead of refusing to start.
        self._transport = None
        self._pending: dict[str, _Waiter] = {}
        self._issued: set[str] = set()
        self._lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._broken: Exception | None = None

    def _ensure_connected(self) -> None:
        with self._lock:
            if self._broken is not None:
                raise self._broken
            if self._transport is not None:
                return
            try:
                self._transport = open_transport(self._endpoint, connect_timeout=self._timeout)
            except Exception as exc:
                self._broken = exc
                raise
            threading.Thread(target=self._read_loop, daemon=True).start()

    def generate(self, request: BackendRequest) -> BackendResponse:
        started = time.perf_counter()
        self._ensure_connected()
        waiter = _Waiter()
        with self._lock:
            if self._broken is not None:
                raise self._broken
            if request.id in self._pending:
                raise ConfigError(f"request id {request.id!r} already in flight")
            self._pending[request.id] = waiter
            self._issued.add(request.id)
        frame = json.dumps({"id": request.id, "context": request.context}, ensure_ascii=False)
        try:
            with self._write_lock:
                self._transport.write_line(frame.encode("utf-8"))
        except Exception:
            with self._lock:
                self._pending.pop(request.id, None)
            raise
        answered = waiter.event.wait(self._timeout)
        with self._lock:
            self._pending.pop(request.id, None)
        if not answered:
            raise BackendTimeout(f"no answer for {request.id!r} within {self._timeout}s")
        if waiter.error is not None:
            raise waiter.error
        assert waiter.text is not None
        return BackendResponse(
            id=request.id, text=waiter.text, latency=time.perf_counter() - started
        )

    def close(self) -> None:
        self._fail_pending(BackendUnavailable("client closed"))
        if self._transport is not None:
            self._transport.close()

    # -- reader side --------------------------------------------------------

    def _fail_pending(self, error: Exception) -> None:
        with self._lock:
            self._broken = error
            waiters = list(self._pending.values())
            self._pending.clear()
        for waiter in waiters:
            waiter.error = error
            waiter.event.set()

    def _read_loop(self) -> None:
        while True:
            try:
                line = self._transport.read_line()
            except Exception as exc:  # transport torn down
                self._fail_pending(BackendUnavailable(f"read failed: {exc}"))
                return
            if line is None:
                self._fail_pending(BackendUnavailable("peer closed the connection"))
                return
            if not line.strip():
                continue
            try:
                frame = json.loads(line.decode("utf-8"))
                if not isinstance(frame, dict):
                    raise ValueError("frame is not an object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._fail_pending(ProtocolViolation(f"malformed frame from peer: {exc}"))
                return
            frame_id = frame.get("id")
            if not isinstance(frame_id, str):
                self._fail_pending(ProtocolViolation("peer frame has no string id"))
                return
            with self._lock:
                waiter = self._pending.get(frame_id)
                known = frame_id in self._issued
            if waiter is None:
                if known:
                    continue  # answer raced a timeout; drop it
                self._fail_pending(
                    ProtocolViolation(f"peer answered unknown id {frame_id!r}")
                )
                return
            if "error" in frame:
                waiter.error = BackendUnavailable(f"peer error: {frame['error']}")
            elif isinstance(frame.get("text"), str):
                waiter.text = frame["text"]
            else:
                waiter.error = ProtocolViolation(
                    f"frame for {frame_id!r} has neither text nor error"
                )
            waiter.event.set()


def remote_generate(endpoint: str, request: BackendRequest, timeout: float = 30.0) -> BackendResponse:
    """One-shot convenience: connect, send one request, tear down."""
    backend = RemoteBackend(endpoint, timeout=timeout)
    try:
        return backend.generate(request)
    finally:
        backend.close()
