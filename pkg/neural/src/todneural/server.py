"""Wire-protocol server: newline-delimited JSON frames over stdio or TCP.

    request   {"id": "...", "context": "..."}
    response  {"id": "...", "text": "..."}
    error     {"id": "...", "error": "..."}

Protocol rules this side is responsible for: answer every request frame
with the same id, ignore keys we do not understand, answer lines that do
not parse with an error frame (id ``""`` when none is recoverable), and
keep serving afterwards.  An error frame fails one request, never the
connection.

Responses go out in arrival order, which the protocol permits; decoding
is serialized under one lock because the model is the bottleneck anyway.
On stdio the frames own stdout, so anything chatty must use stderr.
"""

from __future__ import annotations

import json
import socketserver
import sys
import threading
from typing import Callable

GenerateFn = Callable[[str], str]


def handle_frame(line: bytes, generate: GenerateFn) -> dict:
    """Turn one raw request line into one response frame."""
    try:
        obj = json.loads(line.decode("utf-8"))
        if not isinstance(obj, dict):
            raise ValueError("frame is not a JSON object")
    except (ValueError, UnicodeDecodeError) as exc:
        return {"id": "", "error": f"unparseable frame: {exc}"}
    frame_id = obj.get("id")
    if not isinstance(frame_id, str):
        return {"id": "", "error": "request has no string id"}
    context = obj.get("context")
    if not isinstance(context, str):
        return {"id": frame_id, "error": "request has no string context"}
    try:
        return {"id": frame_id, "text": generate(context)}
    except Exception as exc:  # a bad request must not take the server down
        return {"id": frame_id, "error": f"generation failed: {exc}"}


def _encode(frame: dict) -> bytes:
    return json.dumps(frame, ensure_ascii=False).encode("utf-8") + b"\n"


def serve_stdio(generate: GenerateFn) -> int:
    """Answer frames on stdin until EOF.  Returns the number served."""
    served = 0
    out = sys.stdout.buffer
    for line in sys.stdin.buffer:
        if not line.strip():
            continue
        out.write(_encode(handle_frame(line, generate)))
        out.flush()
        served += 1
    return served


class WireServer(socketserver.ThreadingTCPServer):
    """TCP flavor; one handler thread per connection, shared decode lock."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], generate: GenerateFn) -> None:
        self._generate = generate
        self._decode_lock = threading.Lock()
        super().__init__(address, _ConnectionHandler)

    def answer(self, line: bytes) -> bytes:
        with self._decode_lock:
            return _encode(handle_frame(line, self._generate))

    @property
    def port(self) -> int:
        return self.server_address[1]


class _ConnectionHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        while True:
            try:
                line = self.rfile.readline()
            except OSError:
                return
            if not line:
                return  # peer closed
            if not line.strip():
                continue
            try:
                self.wfile.write(self.server.answer(line))
                self.wfile.flush()
            except OSError:
                return


def start_tcp_server(
    generate: GenerateFn, host: str = "127.0.0.1", port: int = 0
) -> WireServer:
    """Bind and serve in a daemon thread; ``port=0`` picks a free port.

    The caller owns shutdown: ``server.shutdown(); server.server_close()``.
    """
    server = WireServer((host, port), generate)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server
