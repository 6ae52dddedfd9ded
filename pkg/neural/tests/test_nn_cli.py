"""CLI surface: train, perplexity, generate, stdio serve, error mapping."""

import json

import pytest
from click.testing import CliRunner

from todneural import __version__
from todneural.cli import main
from todneural.model import load_checkpoint


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def small_records(tmp_path):
    path = tmp_path / "records.ndjson"
    rows = []
    for i in range(12):
        text = f"question {i:02d}?|answer {i % 3}."
        start = text.index("|") + 1
        rows.append(json.dumps(
            {"full_text": text, "target_start": start, "target_end": len(text)}
        ))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


TINY_SHAPE = ["--d-model", "16", "--layers", "1", "--heads", "2",
              "--ff", "16", "--max-len", "64"]


def test_version(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_train_writes_a_checkpoint(runner, small_records, tmp_path):
    out = tmp_path / "model.pt"
    result = runner.invoke(main, [
        "train", "--records", str(small_records), "--out", str(out),
        "--steps", "5", "--batch-size", "4", "--quiet", *TINY_SHAPE,
    ])
    assert result.exit_code == 0, result.output
    assert "trained 5 steps on 12 records (full objective)" in result.output
    model, extra = load_checkpoint(str(out))
    assert extra == {"objective": "full", "steps": 5}
    assert model.config.d_model == 16


def test_train_can_continue_with_the_target_objective(runner, small_records, tmp_path):
    first = tmp_path / "first.pt"
    second = tmp_path / "second.pt"
    runner.invoke(main, [
        "train", "--records", str(small_records), "--out", str(first),
        "--steps", "3", "--quiet", *TINY_SHAPE,
    ])
    result = runner.invoke(main, [
        "train", "--records", str(small_records), "--init", str(first),
        "--out", str(second), "--objective", "target", "--steps", "4", "--quiet",
    ])
    assert result.exit_code == 0, result.output
    assert "(target objective)" in result.output
    _, extra = load_checkpoint(str(second))
    assert extra == {"objective": "target", "steps": 4}


def test_train_reports_missing_records_file(runner, tmp_path):
    result = runner.invoke(main, [
        "train", "--records", str(tmp_path / "nope.ndjson"),
        "--out", str(tmp_path / "m.pt"), "--steps", "1", "--quiet",
    ])
    assert result.exit_code == 1
    assert "nope.ndjson" in result.output


def test_train_rejects_unknown_objective(runner, small_records, tmp_path):
    result = runner.invoke(main, [
        "train", "--records", str(small_records), "--out", str(tmp_path / "m.pt"),
        "--objective", "sideways",
    ])
    assert result.exit_code == 2


def test_perplexity_command(runner, small_records, tmp_path):
    out = tmp_path / "model.pt"
    runner.invoke(main, [
        "train", "--records", str(small_records), "--out", str(out),
        "--steps", "3", "--quiet", *TINY_SHAPE,
    ])
    result = runner.invoke(main, ["perplexity", "--model", str(out),
                                  "--records", str(small_records)])
    assert result.exit_code == 0
    assert "target perplexity over 12 records:" in result.output


def test_perplexity_rejects_bad_checkpoint(runner, small_records, tmp_path):
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"junk")
    result = runner.invoke(main, ["perplexity", "--model", str(bad),
                                  "--records", str(small_records)])
    assert result.exit_code == 1
    assert "cannot read checkpoint" in result.output


def test_generate_command(runner, small_records, tmp_path):
    out = tmp_path / "model.pt"
    runner.invoke(main, [
        "train", "--records", str(small_records), "--out", str(out),
        "--steps", "3", "--quiet", *TINY_SHAPE,
    ])
    context = tmp_path / "context.txt"
    context.write_text("question 99?|", encoding="utf-8")
    result = runner.invoke(main, [
        "generate", "--model", str(out), "--context", str(context), "--max-new", "8",
    ])
    assert result.exit_code == 0
    assert len(result.output.encode("utf-8")) <= 8 * 4  # replacement chars allowed


def test_serve_stdio_round_trip(runner, tiny_checkpoint):
    frame = json.dumps({"id": "s1", "context": "hello there"})
    result = runner.invoke(main, [
        "serve", "--model", str(tiny_checkpoint), "--stdio", "--max-new", "4",
    ], input=frame + "\n")
    assert result.exit_code == 0, result.output
    answer = json.loads(result.output.splitlines()[0])
    assert answer["id"] == "s1"
    assert isinstance(answer["text"], str)
    assert "served 1 frames" in result.stderr


def test_serve_rejects_bad_endpoint(runner, tiny_checkpoint):
    result = runner.invoke(main, [
        "serve", "--model", str(tiny_checkpoint), "--endpoint", "nonsense",
    ])
    assert result.exit_code == 2
    assert "tcp://HOST:PORT" in result.output + (result.stderr or "")