"""Command line client: argument plumbing, exit codes, scripted chat."""

import json
import socket
import sys
from pathlib import Path

import pytest
from click.testing import CliRunner

from test_backends import PEER_TEMPLATE, PEERS
from todkit.cli import main

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture()
def runner():
    return CliRunner()


def test_version_flag(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output


# ---------------------------------------------------------------------------
# Ingest


def test_ingest_prints_counts(runner):
    result = runner.invoke(
        main,
        [
            "ingest",
            "--schemas", str(DATA_DIR),
            "--dialogues", str(DATA_DIR),
            "--split", str(DATA_DIR / "split.json"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "dialogues: 2" in result.output
    assert "user_turns: 7" in result.output
    assert "acts: 26" in result.output
    assert "seen dialogues: 1" in result.output
    assert "unseen dialogues: 1" in result.output


def test_ingest_violations_exit_two(runner, tmp_path):
    corpus = json.loads((DATA_DIR / "dialogues_001.json").read_text())
    corpus[0]["turns"][0]["frames"][0]["state"]["slot_values"]["phantom"] = ["x"]
    (tmp_path / "schema.json").write_text((DATA_DIR / "schema.json").read_text())
    (tmp_path / "dialogues_001.json").write_text(json.dumps(corpus))
    result = runner.invoke(
        main, ["ingest", "--schemas", str(tmp_path), "--dialogues", str(tmp_path)]
    )
    assert result.exit_code == 2
    assert "violation:" in result.output
    assert "phantom" in result.output


def test_ingest_requires_inputs(runner):
    result = runner.invoke(main, ["ingest", "--dialogues", str(DATA_DIR)])
    assert result.exit_code == 2
    assert "--schemas" in result.output


def test_ingest_missing_path_exits_two(runner, tmp_path):
    result = runner.invoke(
        main,
        ["ingest", "--schemas", str(tmp_path / "void"), "--dialogues", str(tmp_path)],
    )
    assert result.exit_code == 2
    assert "error:" in result.stderr


# ---------------------------------------------------------------------------
# Evaluate


def test_evaluate_oracle_prints_the_table(runner, tmp_path):
    out = tmp_path / "report.json"
    result = runner.invoke(
        main,
        [
            "evaluate",
            "--schemas", str(DATA_DIR),
            "--dialogues", str(DATA_DIR),
            "--backend", "oracle",
            "--output", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "overall" in result.output
    assert f"report written to {out}" in result.output
    assert json.loads(out.read_text())["overall"]["joint_goal_accuracy"] == 1.0


def test_config_file_supplies_defaults(runner, tmp_path):
    config = tmp_path / "defaults.json"
    config.write_text(
        json.dumps(
            {
                "schemas": str(DATA_DIR),
                "dialogues": str(DATA_DIR),
                "backend": "oracle",
            }
        )
    )
    result = runner.invoke(main, ["--config", str(config), "evaluate"])
    assert result.exit_code == 0, result.output
    assert "overall" in result.output


def test_flags_override_the_config_file(runner, tmp_path):
    config = tmp_path / "defaults.json"
    config.write_text(
        json.dumps({"schemas": str(tmp_path / "void"), "dialogues": str(DATA_DIR)})
    )
    result = runner.invoke(
        main,
        ["--config", str(config), "evaluate", "--schemas", str(DATA_DIR),
         "--backend", "oracle"],
    )
    assert result.exit_code == 0, result.output


def test_config_file_must_be_a_json_object(runner, tmp_path):
    config = tmp_path / "defaults.json"
    config.write_text("[1, 2]")
    result = runner.invoke(main, ["--config", str(config), "ingest"])
    assert result.exit_code == 1
    assert "JSON object" in result.output


def test_evaluate_client_error_exits_two(runner):
    result = runner.invoke(
        main,
        [
            "evaluate",
            "--schemas", str(DATA_DIR),
            "--dialogues", str(DATA_DIR),
            "--backend", "remote",
        ],
    )
    assert result.exit_code == 2
    assert "endpoint" in result.stderr


def test_unreachable_server_exits_one(runner):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    result = runner.invoke(
        main,
        ["--server", f"http://127.0.0.1:{port}", "ingest",
         "--schemas", str(DATA_DIR), "--dialogues", str(DATA_DIR)],
    )
    assert result.exit_code == 1
    assert "cannot reach service" in result.stderr


def test_dead_remote_backend_reports_failures(runner):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    result = runner.invoke(
        main,
        [
            "evaluate",
            "--schemas", str(DATA_DIR),
            "--dialogues", str(DATA_DIR),
            "--backend", "remote",
            "--endpoint", f"tcp://127.0.0.1:{port}",
            "--timeout", "2",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "no frames evaluated" in result.output
    assert "backend failures: 2" in result.stderr


# ---------------------------------------------------------------------------
# Simulate, trainprep, sgdx


def test_simulate_then_reingest(runner, tmp_path):
    out = tmp_path / "sim"
    result = runner.invoke(
        main, ["simulate", "--out", str(out), "--n", "4", "--seed", "2"]
    )
    assert result.exit_code == 0, result.output
    assert "dialogues: 4" in result.output
    ingest = runner.invoke(
        main, ["ingest", "--schemas", str(out), "--dialogues", str(out)]
    )
    assert ingest.exit_code == 0, ingest.output
    assert "dialogues: 4" in ingest.output


def test_trainprep_writes_records(runner, tmp_path):
    out = tmp_path / "records.ndjson"
    result = runner.invoke(
        main,
        ["trainprep", "--schemas", str(DATA_DIR), "--dialogues", str(DATA_DIR),
         "--output", str(out)],
    )
    assert result.exit_code == 0, result.output
    assert f"7 records written to {out}" in result.output


def test_sgdx_prints_mean_and_spread(runner, synth_dir):
    result = runner.invoke(
        main,
        ["sgdx", "--schemas", str(synth_dir), "--dialogues", str(synth_dir),
         "--levels", "2", "--backend", "rule-agent"],
    )
    assert result.exit_code == 0, result.output
    assert "levels: 1, 2" in result.output
    line = next(
        l for l in result.output.splitlines() if l.startswith("joint_action_accuracy")
    )
    assert "std" in line
    assert line.rstrip().endswith("0.0000")


def test_sgdx_variant_flag_wants_level_equals_path(runner, synth_dir):
    result = runner.invoke(
        main,
        ["sgdx", "--schemas", str(synth_dir), "--dialogues", str(synth_dir),
         "--variant", "one:/tmp/x.json"],
    )
    assert result.exit_code == 2
    assert "LEVEL=PATH" in result.output


# ---------------------------------------------------------------------------
# Chat


CHAT_SCRIPT = """\
/intent BookRide
pickup_zone=dontcare, ride_tier=dontcare
/state
/yes
/yes
/request fare
/bye
/quit
"""


def test_scripted_chat_session(runner):
    result = runner.invoke(main, ["chat"], input=CHAT_SCRIPT)
    assert result.exit_code == 0, result.output
    assert "domains: RideShare_1, StayFinder_1, TableSpot_1" in result.output
    assert "intent: BookRide" in result.output
    assert "RideShare_1.pickup_zone = dontcare" in result.output
    assert result.output.count("system:") == 6


def test_chat_ends_cleanly_on_eof(runner):
    result = runner.invoke(main, ["chat"], input="/intent BookRide\n")
    assert result.exit_code == 0, result.output


def test_chat_free_text_reaches_the_backend(runner):
    # No sugar, no annotation: the rule agent can only greet.
    result = runner.invoke(main, ["chat"], input="hello there\n/quit\n")
    assert result.exit_code == 0, result.output
    assert "system:" in result.output


# ---------------------------------------------------------------------------
# Report rendering


def test_report_rerenders_saved_json(runner, tmp_path):
    out = tmp_path / "report.json"
    first = runner.invoke(
        main,
        ["evaluate", "--schemas", str(DATA_DIR), "--dialogues", str(DATA_DIR),
         "--backend", "oracle", "--output", str(out)],
    )
    assert first.exit_code == 0
    rendered = runner.invoke(main, ["report", "--input", str(out)])
    assert rendered.exit_code == 0, rendered.output
    table = first.output[: first.output.index("report written")].rstrip()
    assert rendered.output.rstrip() == table


def test_report_missing_file_exits_two(runner, tmp_path):
    result = runner.invoke(main, ["report", "--input", str(tmp_path / "none.json")])
    assert result.exit_code == 2


def test_report_garbage_json_exits_two(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"overall": {}}')
    result = runner.invoke(main, ["report", "--input", str(bad)])
    assert result.exit_code == 2
    assert "missing" in result.stderr


# ---------------------------------------------------------------------------
# Conformance


@pytest.fixture(scope="module")
def cli_peers(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_peers")
    endpoints = {}
    for name in ("echo", "no_error_frames"):
        script = root / f"{name}.py"
        script.write_text(PEER_TEMPLATE.format(body=PEERS[name]))
        endpoints[name] = f"stdio:{sys.executable} {script}"
    return endpoints


def test_conformance_passes_a_good_peer(runner, cli_peers):
    result = runner.invoke(main, ["conformance", cli_peers["echo"]])
    assert result.exit_code == 0, result.output
    assert "[PASS]" in result.output
    assert "[FAIL]" not in result.output


def test_conformance_fails_a_lenient_peer(runner, cli_peers):
    result = runner.invoke(main, ["conformance", cli_peers["no_error_frames"]])
    assert result.exit_code == 1
    assert "[FAIL]" in result.output
