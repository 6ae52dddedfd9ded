"""Wire-protocol conformance checks for backend servers.

Run against any endpoint to verify it speaks the protocol well enough to sit
behind the evaluation and simulation drivers.  Checks are about framing and
correlation only; the quality of the generated text is out of scope.

    python -m todkit.backends.conformance tcp://127.0.0.1:9900
"""

from __future__ import annotations

import json
import sys
import threading
from dataclasses import dataclass

from ..model import DialogState
from ..serialize import build_context
from .base import ACTION_TYPES, BackendRequest
from .remote import RemoteBackend, open_transport


@dataclass(frozen=True, slots=True)
class ConformanceCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True, slots=True)
class ConformanceReport:
    checks: tuple[ConformanceCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[str]:
        return [f"{c.name}: {c.detail}" for c in self.checks if not c.passed]

    def render(self) -> str:
        lines = []
        for check in self.checks:
            status = "PASS" if check.passed else "FAIL"
            suffix = f"  ({check.detail})" if check.detail and not check.passed else ""
            lines.append(f"[{status}] {check.name}{suffix}")
        return "\n".join(lines)


def _probe_context() -> str:
    return build_context(DialogState(), "hello", [], None, ACTION_TYPES).text


def _check_single(endpoint: str, timeout: float) -> ConformanceCheck:
    name = "answers a request with a correlated frame"
    backend = RemoteBackend(endpoint, timeout=timeout)
    try:
        response = backend.generate(BackendRequest(id="conf-single", context=_probe_context()))
        if not isinstance(response.text, str):
            return ConformanceCheck(name, False, "no text payload")
        return ConformanceCheck(name, True)
    except Exception as exc:
        return ConformanceCheck(name, False, repr(exc))
    finally:
        backend.close()


def _check_concurrent(endpoint: str, timeout: float) -> ConformanceCheck:
    name = "serves pipelined requests, any answer order"
    backend = RemoteBackend(endpoint, timeout=timeout)
    context = _probe_context()
    results: dict[str, Exception | None] = {}

    def call(request_id: str) -> None:
        try:
            backend.generate(BackendRequest(id=request_id, context=context))
            results[request_id] = None
        except Exception as exc:
            results[request_id] = exc

    try:
        threads = [
            threading.Thread(target=call, args=(f"conf-multi-{i}",)) for i in range(3)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout + 5)
        failed = {rid: exc for rid, exc in results.items() if exc is not None}
        if len(results) < 3:
            return ConformanceCheck(name, False, "not all calls returned")
        if failed:
            return ConformanceCheck(name, False, repr(failed))
        return ConformanceCheck(name, True)
    finally:
        backend.close()


def _check_raw(endpoint: str, timeout: float) -> list[ConformanceCheck]:
    """Checks that need hand-built frames: unknown keys and malformed lines."""
    checks: list[ConformanceCheck] = []
    transport = open_transport(endpoint, connect_timeout=timeout)
    lock = threading.Lock()

    def roundtrip(payload: bytes, want_id: str | None) -> dict | None:
        with lock:
            transport.write_line(payload)
        deadline_frames = 10
        while deadline_frames:
            line = transport.read_line()
            if line is None:
                return None
            try:
                frame = json.loads(line.decode("utf-8"))
            except ValueError:
                return None
            if want_id is None or frame.get("id") == want_id:
                return frame
            deadline_frames -= 1
        return None

    try:
        request = {"id": "conf-extra", "context": _probe_context(), "x-future": [1, 2]}
        frame = roundtrip(json.dumps(request).encode("utf-8"), "conf-extra")
        if frame is None:
            checks.append(ConformanceCheck("ignores unknown request keys", False, "no answer"))
        elif "text" not in frame:
            checks.append(
                ConformanceCheck(
                    "ignores unknown request keys", False, f"answered {frame!r}"
                )
            )
        else:
            checks.append(ConformanceCheck("ignores unknown request keys", True))

        frame = roundtrip(b"this is not json", None)
        if frame is None or "error" not in frame:
            checks.append(
                ConformanceCheck(
                    "reports malformed lines as error frames", False, f"got {frame!r}"
                )
            )
        else:
            checks.append(ConformanceCheck("reports malformed lines as error frames", True))

        request = {"id": "conf-after-garbage", "context": _probe_context()}
        frame = roundtrip(json.dumps(request).encode("utf-8"), "conf-after-garbage")
        if frame is None or "text" not in frame:
            checks.append(
                ConformanceCheck("keeps serving after malformed input", False, f"got {frame!r}")
            )
        else:
            checks.append(ConformanceCheck("keeps serving after malformed input", True))
    except Exception as exc:
        checks.append(ConformanceCheck("raw framing checks", False, repr(exc)))
    finally:
        transport.close()
    return checks


def run_conformance(endpoint: str, timeout: float = 15.0) -> ConformanceReport:
    """Run every protocol check against a live endpoint.

    stdio endpoints get a fresh process per connection-scoped check, which is
    exactly the lifecycle the drivers use.
    """
    checks = [_check_single(endpoint, timeout), _check_concurrent(endpoint, timeout)]
    checks.extend(_check_raw(endpoint, timeout))
    return ConformanceReport(checks=tuple(checks))


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) not in (1, 2):
        print("usage: python -m todkit.backends.conformance ENDPOINT [TIMEOUT]", file=sys.stderr)
        return 2
    timeout = float(args[1]) if len(args) == 2 else 15.0
    report = run_conformance(args[0], timeout=timeout)
    print(report.render())
    return 0 if report.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
