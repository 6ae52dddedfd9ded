"""HTTP service: every batch job and the live chat loop over TestClient."""

import json
import socket
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

import todkit
from todkit.service import create_app

DATA_DIR = Path(__file__).parent / "data"

SEP = "␟"
JOIN = "␞"


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


def annotated(text: str, *acts: tuple) -> str:
    blocks = [SEP.join(("act",) + act) for act in acts]
    return f"{text} ⟦{JOIN.join(blocks)}⟧"


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_health_reports_the_package_version(client):
    body = client.get("/health").json()
    assert body == {"status": "ok", "version": todkit.__version__}


# ---------------------------------------------------------------------------
# Ingest


def test_ingest_counts_the_fixture_corpus(client):
    resp = client.post(
        "/ingest",
        json={
            "schemas": str(DATA_DIR),
            "dialogues": str(DATA_DIR),
            "split": str(DATA_DIR / "split.json"),
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["dialogues"] == 2
    assert body["domains"] == 2
    assert body["user_turns"] == 7
    assert body["frames"] == 14
    assert body["acts"] == 26
    assert body["violations"] == []
    assert body["split_counts"] == {"seen": 1, "unseen": 1}


def test_ingest_reports_schema_violations(client, tmp_path):
    corpus = json.loads((DATA_DIR / "dialogues_001.json").read_text())
    state = corpus[0]["turns"][0]["frames"][0]["state"]
    state["slot_values"]["phantom_slot"] = ["x"]
    (tmp_path / "schema.json").write_text((DATA_DIR / "schema.json").read_text())
    (tmp_path / "dialogues_001.json").write_text(json.dumps(corpus))
    body = client.post(
        "/ingest", json={"schemas": str(tmp_path), "dialogues": str(tmp_path)}
    ).json()
    assert any("phantom_slot" in v for v in body["violations"])


def test_ingest_missing_path_is_a_client_error(client, tmp_path):
    resp = client.post(
        "/ingest",
        json={"schemas": str(tmp_path / "nowhere"), "dialogues": str(tmp_path)},
    )
    assert resp.status_code == 400


# ---------------------------------------------------------------------------
# Evaluate


def test_evaluate_oracle_produces_a_perfect_report(client, tmp_path):
    out = tmp_path / "report.json"
    resp = client.post(
        "/evaluate",
        json={
            "schemas": str(DATA_DIR),
            "dialogues": str(DATA_DIR),
            "backend": {"kind": "oracle"},
            "split": str(DATA_DIR / "split.json"),
            "output": str(out),
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["failures"] == 0
    assert body["report"]["overall"]["joint_goal_accuracy"] == 1.0
    assert set(body["report"]["by_split"]) == {"seen", "unseen"}
    assert "overall" in body["table"]
    assert body["output_path"] == str(out)
    assert json.loads(out.read_text()) == body["report"]


def test_evaluate_with_dead_remote_still_completes(client):
    resp = client.post(
        "/evaluate",
        json={
            "schemas": str(DATA_DIR),
            "dialogues": str(DATA_DIR),
            "backend": {
                "kind": "remote",
                "endpoint": f"tcp://127.0.0.1:{free_port()}",
                "timeout": 2.0,
            },
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["report"] is None
    assert body["failures"] == 2
    assert "backend failures: 2" in body["table"]


def test_evaluate_remote_without_endpoint_is_rejected(client):
    resp = client.post(
        "/evaluate",
        json={
            "schemas": str(DATA_DIR),
            "dialogues": str(DATA_DIR),
            "backend": {"kind": "remote"},
        },
    )
    assert resp.status_code == 400
    assert "endpoint" in resp.json()["detail"]


def test_evaluate_bad_endpoint_syntax_is_rejected(client):
    resp = client.post(
        "/evaluate",
        json={
            "schemas": str(DATA_DIR),
            "dialogues": str(DATA_DIR),
            "backend": {"kind": "remote", "endpoint": "carrier-pigeon"},
        },
    )
    assert resp.status_code == 400


# ---------------------------------------------------------------------------
# Simulate and trainprep


def test_simulate_writes_a_loadable_corpus(client, tmp_path):
    out = tmp_path / "sim"
    resp = client.post(
        "/simulate", json={"output_dir": str(out), "n_dialogs": 6, "seed": 3}
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["dialogues"] == 6
    assert body["training_records"] > 0
    assert Path(body["schema_path"]).exists()

    ingested = client.post(
        "/ingest", json={"schemas": str(out), "dialogues": str(out)}
    ).json()
    assert ingested["dialogues"] == 6
    assert ingested["violations"] == []

    lines = Path(body["records_path"]).read_text().splitlines()
    assert len(lines) == body["training_records"]
    first = json.loads(lines[0])
    assert set(first) == {"full_text", "target_start", "target_end"}


def test_trainprep_extracts_one_record_per_scorable_turn(client, tmp_path):
    out = tmp_path / "records.ndjson"
    resp = client.post(
        "/trainprep",
        json={
            "schemas": str(DATA_DIR),
            "dialogues": str(DATA_DIR),
            "output": str(out),
        },
    )
    assert resp.status_code == 200
    assert resp.json()["records"] == 7
    assert len(out.read_text().splitlines()) == 7


# ---------------------------------------------------------------------------
# Variant sweeps


def test_sgdx_sweep_is_flat_for_the_rule_agent(client, synth_dir):
    resp = client.post(
        "/sgdx",
        json={
            "schemas": str(synth_dir),
            "dialogues": str(synth_dir),
            "backend": {"kind": "rule-agent"},
            "levels": 2,
        },
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["levels"] == [1, 2]
    assert set(body["reports"]) == {"1", "2"}
    assert body["std"]["joint_action_accuracy"] == 0.0
    assert body["std"]["joint_goal_accuracy"] == 0.0


def test_sgdx_needs_two_levels(client, synth_dir):
    resp = client.post(
        "/sgdx",
        json={"schemas": str(synth_dir), "dialogues": str(synth_dir), "levels": 1},
    )
    assert resp.status_code == 400


# ---------------------------------------------------------------------------
# Chat


def test_chat_session_lifecycle(client):
    opened = client.post("/chat/session", json={"backend": {"kind": "rule-agent"}})
    assert opened.status_code == 200
    sid = opened.json()["session_id"]
    assert opened.json()["domains"] == ["RideShare_1", "StayFinder_1", "TableSpot_1"]

    first = client.post(
        f"/chat/{sid}/turn",
        json={
            "utterance": annotated(
                "I need a ride.", ("RideShare_1", "INFORM", "intent", "BookRide")
            )
        },
    ).json()
    assert [a["act_type"] for a in first["system_actions"]] == ["REQUEST"]
    assert first["system_actions"][0]["slot"] == "pickup_zone"
    assert first["state"]["active_intent"] == "BookRide"

    second = client.post(
        f"/chat/{sid}/turn",
        json={
            "utterance": annotated(
                "Anywhere works, any tier.",
                ("RideShare_1", "INFORM", "pickup_zone", "dontcare"),
                ("RideShare_1", "INFORM", "ride_tier", "dontcare"),
            )
        },
    ).json()
    assert [a["act_type"] for a in second["system_actions"]] == [
        "INFORM_COUNT",
        "OFFER",
    ]
    # Nothing filters, so the count covers the whole generated table and the
    # offer leads with the first headline value from the name pool.
    assert second["system_actions"][0]["values"] == ["10"]
    assert second["system_actions"][1]["slot"] == "driver_name"
    assert second["system_actions"][1]["values"] == ["Avery"]
    assert ["RideShare_1", "pickup_zone", ["dontcare"]] in second["state"]["slot_values"]
    assert second["warnings"] == []

    status = client.get(f"/chat/{sid}/state").json()
    assert status["turns"] == 2
    assert status["state"]["active_intent"] == "BookRide"

    assert client.delete(f"/chat/{sid}").json() == {"closed": sid}
    assert client.post(f"/chat/{sid}/turn", json={"utterance": "hi"}).status_code == 404
    assert client.get(f"/chat/{sid}/state").status_code == 404
    assert client.delete(f"/chat/{sid}").status_code == 404


def test_chat_rejects_the_oracle(client):
    resp = client.post("/chat/session", json={"backend": {"kind": "oracle"}})
    assert resp.status_code == 400
    assert "oracle" in resp.json()["detail"]


# ---------------------------------------------------------------------------
# Report rendering


def test_report_render_round_trips_evaluate_output(client):
    evaluated = client.post(
        "/evaluate",
        json={
            "schemas": str(DATA_DIR),
            "dialogues": str(DATA_DIR),
            "backend": {"kind": "oracle"},
        },
    ).json()
    rendered = client.post("/report/render", json={"report": evaluated["report"]})
    assert rendered.status_code == 200
    assert rendered.json()["table"] == evaluated["table"]


def test_report_render_rejects_garbage(client):
    resp = client.post("/report/render", json={"report": {"nope": 1}})
    assert resp.status_code == 400
