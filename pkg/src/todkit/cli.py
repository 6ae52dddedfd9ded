"""Command line client.

Every subcommand except `serve` talks HTTP to the service layer.  With no
--server the app is mounted in-process over an ASGI transport, so the
default experience needs no running daemon while staying byte-identical to
the networked one.

Exit codes: 0 success, 1 server-side or backend failure, 2 bad input.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Mapping

import click
import httpx

from .model import Act
from .serialize import render_user_annotation, strip_annotations

_IN_PROCESS_BASE = "http://todkit.local"


class Client:
    """HTTP plumbing plus config-file defaults shared by all subcommands."""

    def __init__(self, server: str | None, config_path: str | None) -> None:
        self.defaults: Mapping[str, Any] = {}
        if config_path:
            try:
                loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise click.ClickException(f"config file {config_path}: {exc}")
            if not isinstance(loaded, dict):
                raise click.ClickException(f"config file {config_path}: must be a JSON object")
            self.defaults = loaded
        if server is None:
            server = self.defaults.get("server")
        if server:
            self._http = httpx.Client(base_url=server, timeout=600.0)
        else:
            # TestClient is the supported sync bridge into an ASGI app; it
            # behaves exactly like httpx.Client against a live server.
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service.app import create_app

            self._http = TestClient(
                create_app(), base_url=_IN_PROCESS_BASE, raise_server_exceptions=False
            )

    def opt(self, key: str, flag_value, *, required: bool = False):
        """Flag wins, then config file, then None (or a usage error)."""
        value = flag_value if flag_value is not None else self.defaults.get(key)
        if required and value is None:
            raise click.UsageError(f"missing --{key.replace('_', '-')} (or {key!r} in --config)")
        return value

    def call(self, method: str, path: str, payload: dict | None = None) -> dict:
        try:
            response = self._http.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach service: {exc}", err=True)
            raise SystemExit(1)
        if response.status_code >= 400:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            click.echo(f"error: {detail}", err=True)
            raise SystemExit(1 if response.status_code >= 500 else 2)
        return response.json()


def _backend_payload(client: Client, backend, endpoint, timeout) -> dict:
    spec = {
        "kind": client.opt("backend", backend) or "rule-agent",
        "endpoint": client.opt("endpoint", endpoint),
    }
    resolved = client.opt("timeout", timeout)
    if resolved is not None:
        spec["timeout"] = float(resolved)
    return spec


@click.group()
@click.option("--server", envvar="TODKIT_SERVER", default=None, metavar="URL",
              help="Base URL of a running service; default is in-process.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON object with default values for options.")
@click.version_option(package_name="todkit")
@click.pass_context
def main(ctx: click.Context, server: str | None, config_path: str | None) -> None:
    """Schema-guided dialog harness."""
    ctx.obj = Client(server, config_path)


@main.command()
@click.option("--schemas", default=None, help="Schema file or corpus directory.")
@click.option("--dialogues", default=None, help="Dialogue file or directory.")
@click.option("--split", default=None, help="Seen/unseen domain split file.")
@click.pass_obj
def ingest(client: Client, schemas, dialogues, split) -> None:
    """Validate a corpus and print counts."""
    result = client.call("POST", "/ingest", {
        "schemas": client.opt("schemas", schemas, required=True),
        "dialogues": client.opt("dialogues", dialogues, required=True),
        "split": client.opt("split", split),
    })
    for key in ("dialogues", "domains", "user_turns", "frames", "acts"):
        click.echo(f"{key}: {result[key]}")
    if result.get("split_counts"):
        click.echo(f"seen dialogues: {result['split_counts']['seen']}")
        click.echo(f"unseen dialogues: {result['split_counts']['unseen']}")
    for violation in result["violations"]:
        click.echo(f"violation: {violation}")
    if result.get("violations_truncated"):
        click.echo("violation list truncated")
    if result["violations"]:
        raise SystemExit(2)


@main.command()
@click.option("--schemas", default=None)
@click.option("--dialogues", default=None)
@click.option("--split", default=None)
@click.option("--backend", type=click.Choice(["oracle", "rule-agent", "remote"]), default=None)
@click.option("--endpoint", default=None, help="tcp://host:port or stdio:command.")
@click.option("--timeout", type=float, default=None)
@click.option("--prev-state", type=click.Choice(["predicted", "gold"]), default=None)
@click.option("--workers", type=int, default=None)
@click.option("--output", default=None, help="Also write the report JSON here.")
@click.pass_obj
def evaluate(client, schemas, dialogues, split, backend, endpoint, timeout,
             prev_state, workers, output) -> None:
    """Score a backend over an annotated corpus."""
    result = client.call("POST", "/evaluate", {
        "schemas": client.opt("schemas", schemas, required=True),
        "dialogues": client.opt("dialogues", dialogues, required=True),
        "split": client.opt("split", split),
        "backend": _backend_payload(client, backend, endpoint, timeout),
        "prev_state": client.opt("prev_state", prev_state) or "predicted",
        "workers": int(client.opt("workers", workers) or 1),
        "output": client.opt("output", output),
    })
    click.echo(result["table"])
    if result["failures"]:
        click.echo(f"backend failures: {result['failures']}", err=True)
    if result.get("output_path"):
        click.echo(f"report written to {result['output_path']}")


@main.command()
@click.option("--out", "output_dir", default=None, help="Directory for the generated corpus.")
@click.option("--n", "n_dialogs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--schemas", default=None, help="Domains to simulate; defaults to the built-ins.")
@click.option("--records-per-domain", type=int, default=None)
@click.option("--max-turns", type=int, default=None)
@click.pass_obj
def simulate(client, output_dir, n_dialogs, seed, schemas,
             records_per_domain, max_turns) -> None:
    """Generate a synthetic corpus with the rule agent and user simulator."""
    result = client.call("POST", "/simulate", {
        "output_dir": client.opt("out", output_dir, required=True),
        "n_dialogs": int(client.opt("n", n_dialogs) or 12),
        "seed": int(client.opt("seed", seed) or 0),
        "schemas": client.opt("schemas", schemas),
        "records_per_domain": int(client.opt("records_per_domain", records_per_domain) or 10),
        "max_turns": int(client.opt("max_turns", max_turns) or 30),
    })
    click.echo(f"dialogues: {result['dialogues']} ({result['turns']} turns)")
    click.echo(f"training records: {result['training_records']}")
    for key in ("schema_path", "corpus_path", "records_path"):
        click.echo(f"{key.replace('_', ' ')}: {result[key]}")


@main.command()
@click.option("--schemas", default=None)
@click.option("--dialogues", default=None)
@click.option("--output", default=None, help="NDJSON file of training records.")
@click.pass_obj
def trainprep(client, schemas, dialogues, output) -> None:
    """Render gold dialogues into model training records."""
    result = client.call("POST", "/trainprep", {
        "schemas": client.opt("schemas", schemas, required=True),
        "dialogues": client.opt("dialogues", dialogues, required=True),
        "output": client.opt("output", output, required=True),
    })
    click.echo(f"{result['records']} records written to {result['output_path']}")


@main.command()
@click.option("--schemas", default=None)
@click.option("--dialogues", default=None)
@click.option("--variant", "variants", multiple=True, metavar="LEVEL=PATH",
              help="Explicit variant schema files; repeatable.")
@click.option("--levels", type=int, default=None,
              help="Synthesized variant count when no --variant is given.")
@click.option("--backend", type=click.Choice(["oracle", "rule-agent", "remote"]), default=None)
@click.option("--endpoint", default=None)
@click.option("--timeout", type=float, default=None)
@click.option("--prev-state", type=click.Choice(["predicted", "gold"]), default=None)
@click.option("--workers", type=int, default=None)
@click.pass_obj
def sgdx(client, schemas, dialogues, variants, levels, backend, endpoint,
         timeout, prev_state, workers) -> None:
    """Sweep schema surface variants and report per-metric mean and spread."""
    parsed_variants: dict[int, str] = {}
    for item in variants:
        level, sep, path = item.partition("=")
        if not sep or not level.isdigit():
            raise click.UsageError(f"--variant wants LEVEL=PATH, got {item!r}")
        parsed_variants[int(level)] = path
    result = client.call("POST", "/sgdx", {
        "schemas": client.opt("schemas", schemas, required=True),
        "dialogues": client.opt("dialogues", dialogues, required=True),
        "backend": _backend_payload(client, backend, endpoint, timeout),
        "variants": parsed_variants,
        "levels": int(client.opt("levels", levels) or 5),
        "prev_state": client.opt("prev_state", prev_state) or "predicted",
        "workers": int(client.opt("workers", workers) or 1),
    })
    click.echo(f"levels: {', '.join(str(l) for l in result['levels'])}")
    width = max(len(name) for name in result["mean"])
    for name, mu in result["mean"].items():
        click.echo(f"{name.ljust(width)} mean {mu:10.4f}  std {result['std'][name]:8.4f}")


_CHAT_HELP = """\
/intent NAME        announce what you want to do
slot=value, ...     provide constraints (every comma chunk must contain '=')
/request slot[,..]  ask for result attributes
/yes  /no           accept or decline an offer
/thanks  /bye       wind the conversation down
/state              show the tracked dialog state
/quit               leave"""


def _sugar_to_acts(line: str) -> list[Act] | None:
    """Translate REPL shorthand into annotation acts; None means free text."""
    stripped = line.strip()
    if stripped.startswith("/intent "):
        return [Act("", "INFORM", "intent", (stripped[len("/intent "):].strip(),))]
    if stripped.startswith("/request "):
        slots = [s.strip() for s in stripped[len("/request "):].split(",") if s.strip()]
        return [Act("", "REQUEST", slot) for slot in slots]
    if stripped == "/yes":
        return [Act("", "AFFIRM")]
    if stripped == "/no":
        return [Act("", "NEGATE")]
    if stripped == "/thanks":
        return [Act("", "THANK_YOU")]
    if stripped == "/bye":
        return [Act("", "GOODBYE")]
    chunks = [c.strip() for c in stripped.split(",")]
    if chunks and all("=" in c for c in chunks):
        acts = []
        for chunk in chunks:
            slot, _, value = chunk.partition("=")
            if not slot.strip() or not value.strip():
                return None
            acts.append(Act("", "INFORM", slot.strip(), (value.strip(),)))
        return acts
    return None


@main.command()
@click.option("--backend", type=click.Choice(["rule-agent", "remote"]), default=None)
@click.option("--endpoint", default=None)
@click.option("--timeout", type=float, default=None)
@click.option("--schemas", default=None)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def chat(client, backend, endpoint, timeout, schemas, seed) -> None:
    """Talk to a backend interactively."""
    opened = client.call("POST", "/chat/session", {
        "backend": _backend_payload(client, backend, endpoint, timeout),
        "schemas": client.opt("schemas", schemas),
        "seed": int(client.opt("seed", seed) or 0),
    })
    session_id = opened["session_id"]
    click.echo(f"session {session_id}; domains: {', '.join(opened['domains'])}")
    click.echo(_CHAT_HELP)
    try:
        while True:
            try:
                line = click.prompt("you", prompt_suffix="> ", default="", show_default=False)
            except (EOFError, click.Abort):
                break
            if not line.strip():
                continue
            if line.strip() == "/quit":
                break
            if line.strip() == "/state":
                state = client.call("GET", f"/chat/{session_id}/state")["state"]
                click.echo(f"intent: {state['active_intent'] or '(none)'}")
                for domain, slot, values in state["slot_values"]:
                    click.echo(f"  {domain}.{slot} = {' | '.join(values)}")
                for domain, slot in state["requested_slots"]:
                    click.echo(f"  requested {domain}.{slot}")
                continue
            acts = _sugar_to_acts(line)
            utterance = line if acts is None else (
                f"{strip_annotations(line)} {render_user_annotation(acts)}"
                if acts else line
            )
            turn = client.call("POST", f"/chat/{session_id}/turn", {"utterance": utterance})
            click.echo(f"system: {turn['response']}")
            for warning in turn["warnings"]:
                click.echo(f"  (warning: {warning})", err=True)
    finally:
        client.call("DELETE", f"/chat/{session_id}")


@main.command()
@click.option("--input", "input_path", default=None, help="Report JSON to render.")
@click.pass_obj
def report(client, input_path) -> None:
    """Render a saved evaluation report as a table."""
    path = client.opt("input", input_path, required=True)
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2)
    result = client.call("POST", "/report/render", {"report": payload})
    click.echo(result["table"])


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8022)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level="info")


@main.command()
@click.argument("endpoint")
@click.option("--timeout", type=float, default=15.0)
def conformance(endpoint: str, timeout: float) -> None:
    """Check a wire-protocol peer against the framing rules."""
    from .backends.conformance import run_conformance

    report_ = run_conformance(endpoint, timeout=timeout)
    click.echo(report_.render())
    if not report_.ok:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
