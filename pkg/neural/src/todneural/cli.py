"""Command-line entry points: train, perplexity, serve, generate."""

from __future__ import annotations

import sys

import click

from . import __version__
from .decoding import generate_text
from .errors import NeuralError
from .model import ByteLM, ModelConfig, load_checkpoint, save_checkpoint
from .records import TrainRecord, load_records
from .server import WireServer, serve_stdio
from .training import OBJECTIVES, TrainSettings, held_out_perplexity, train


def _read_records(paths: tuple[str, ...]) -> list[TrainRecord]:
    records: list[TrainRecord] = []
    for path in paths:
        records.extend(load_records(path))
    return records


def _parse_tcp(endpoint: str) -> tuple[str, int]:
    hostport = endpoint[len("tcp://"):] if endpoint.startswith("tcp://") else endpoint
    host, sep, port_text = hostport.rpartition(":")
    if not sep or not host:
        raise click.UsageError(f"endpoint {endpoint!r} is not tcp://HOST:PORT")
    try:
        return host, int(port_text)
    except ValueError:
        raise click.UsageError(f"endpoint {endpoint!r} has a non-numeric port") from None


@click.group()
@click.version_option(__version__, prog_name="todneural")
def main() -> None:
    """Byte-level transformer backend for serialized dialog turns."""


@main.command("train")
@click.option("--records", "record_paths", multiple=True, required=True,
              help="Training-record NDJSON file; repeat to concatenate.")
@click.option("--out", "out_path", required=True, help="Checkpoint to write.")
@click.option("--init", "init_path", default=None,
              help="Continue from this checkpoint instead of fresh weights.")
@click.option("--objective", type=click.Choice(OBJECTIVES), default="full",
              help="full = loss on every byte; target = loss on the target span.")
@click.option("--steps", default=700, show_default=True)
@click.option("--batch-size", default=6, show_default=True)
@click.option("--lr", "peak_lr", default=1.5e-3, show_default=True)
@click.option("--warmup", default=30, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--d-model", default=128, show_default=True)
@click.option("--layers", default=3, show_default=True)
@click.option("--heads", default=4, show_default=True)
@click.option("--ff", default=256, show_default=True)
@click.option("--max-len", default=1792, show_default=True)
@click.option("--quiet", is_flag=True, help="No per-step progress lines.")
def train_command(record_paths, out_path, init_path, objective, steps, batch_size,
                  peak_lr, warmup, seed, d_model, layers, heads, ff, max_len, quiet):
    """Run one training pass and write a checkpoint."""
    try:
        records = _read_records(record_paths)
        if init_path is not None:
            model, _ = load_checkpoint(init_path)
        else:
            model = ByteLM(ModelConfig(
                d_model=d_model, n_layers=layers, n_heads=heads,
                d_ff=ff, max_len=max_len,
            ))
        settings = TrainSettings(
            objective=objective, steps=steps, batch_size=batch_size,
            peak_lr=peak_lr, warmup=warmup, seed=seed,
        )
        progress = None if quiet else (lambda line: click.echo(line, err=True))
        final = train(model, records, settings, progress=progress)
        save_checkpoint(model, out_path, extra={"objective": objective, "steps": steps})
    except (NeuralError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(
        f"trained {steps} steps on {len(records)} records "
        f"({objective} objective); final loss {final:.4f}; "
        f"checkpoint written to {out_path}"
    )


@main.command("perplexity")
@click.option("--model", "model_path", required=True)
@click.option("--records", "record_paths", multiple=True, required=True)
def perplexity_command(model_path, record_paths):
    """Per-byte perplexity over the records' target spans."""
    try:
        model, _ = load_checkpoint(model_path)
        records = _read_records(record_paths)
        value = held_out_perplexity(model, records)
    except (NeuralError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(f"target perplexity over {len(records)} records: {value:.4f}")


@main.command("serve")
@click.option("--model", "model_path", required=True)
@click.option("--stdio", "use_stdio", is_flag=True,
              help="Speak frames on stdin/stdout instead of TCP.")
@click.option("--endpoint", default="tcp://127.0.0.1:9901", show_default=True,
              help="tcp://HOST:PORT; port 0 picks a free one.")
@click.option("--max-new", default=512, show_default=True,
              help="Generation cap per request, in bytes.")
def serve_command(model_path, use_stdio, endpoint, max_new):
    """Serve the model over the wire protocol."""
    try:
        model, _ = load_checkpoint(model_path)
    except (NeuralError, OSError) as exc:
        raise click.ClickException(str(exc)) from None

    def generate(context: str) -> str:
        return generate_text(model, context, max_new=max_new)

    if use_stdio:
        served = serve_stdio(generate)
        click.echo(f"served {served} frames", err=True)
        return
    host, port = _parse_tcp(endpoint)
    try:
        server = WireServer((host, port), generate)
    except OSError as exc:
        raise click.ClickException(f"cannot bind {endpoint}: {exc}") from None
    click.echo(f"listening on {server.server_address[0]}:{server.port}", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


@main.command("generate")
@click.option("--model", "model_path", required=True)
@click.option("--context", "context_path", default="-",
              help="File holding one serialized context; - reads stdin.")
@click.option("--max-new", default=512, show_default=True)
def generate_command(model_path, context_path, max_new):
    """One-shot generation, for poking at a checkpoint."""
    try:
        model, _ = load_checkpoint(model_path)
        if context_path == "-":
            context = sys.stdin.read()
        else:
            with open(context_path, encoding="utf-8") as handle:
                context = handle.read()
    except (NeuralError, OSError) as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(generate_text(model, context, max_new=max_new), nl=False)


if __name__ == "__main__":
    main()
