"""Shared fixtures: toy corpora exported by the harness CLI, tiny models.

Everything the neural package consumes is produced the way a real user
would produce it: ``todkit simulate`` writes the corpora and the training
records, and the tests here never import the harness package.
"""

from __future__ import annotations

import json
import subprocess
import sys

import pytest
import torch

from todneural.model import ByteLM, ModelConfig, save_checkpoint
from todneural.records import load_records

# One deliberately small domain keeps serialized turns short, which is what
# makes from-scratch training tractable on a single CPU core.
MINI_SCHEMA = [
    {
        "service_name": "MiniRide_1",
        "description": "Book short rides in town.",
        "slots": [
            {
                "name": "zone",
                "description": "Pickup zone.",
                "is_categorical": True,
                "possible_values": ["north", "south", "center"],
            },
            {
                "name": "tier",
                "description": "Ride tier.",
                "is_categorical": True,
                "possible_values": ["basic", "plus"],
            },
            {
                "name": "driver",
                "description": "Driver name.",
                "is_categorical": False,
                "possible_values": [],
            },
            {
                "name": "fare",
                "description": "Total fare.",
                "is_categorical": False,
                "possible_values": [],
            },
        ],
        "intents": [
            {
                "name": "BookMini",
                "description": "Reserve a ride.",
                "is_transactional": True,
                "required_slots": ["zone", "tier"],
                "optional_slots": {},
                "result_slots": ["driver", "fare"],
            }
        ],
    }
]


def run_todkit(*args: str) -> subprocess.CompletedProcess:
    result = subprocess.run(
        [sys.executable, "-m", "todkit.cli", *args],
        capture_output=True,
        text=True,
        timeout=600,
    )
    if result.returncode != 0:
        raise AssertionError(
            f"todkit {' '.join(args)} failed ({result.returncode}):\n"
            f"{result.stdout}\n{result.stderr}"
        )
    return result


def _simulate(tmp_path_factory, name: str, count: int, seed: int) -> dict:
    root = tmp_path_factory.mktemp(name)
    schema_path = root / "mini_schema.json"
    schema_path.write_text(json.dumps(MINI_SCHEMA), encoding="utf-8")
    out = root / "corpus"
    run_todkit(
        "simulate",
        "--schemas", str(schema_path),
        "--n", str(count),
        "--seed", str(seed),
        "--out", str(out),
    )
    return {
        "dir": out,
        "schema": out / "schema.json",
        "records": out / "train_records.ndjson",
    }


@pytest.fixture(scope="session")
def train_corpus(tmp_path_factory):
    return _simulate(tmp_path_factory, "train-corpus", count=50, seed=13)


@pytest.fixture(scope="session")
def eval_corpus(tmp_path_factory):
    return _simulate(tmp_path_factory, "eval-corpus", count=10, seed=99)


@pytest.fixture(scope="session")
def train_records(train_corpus):
    return load_records(str(train_corpus["records"]))


@pytest.fixture(scope="session")
def eval_records(eval_corpus):
    return load_records(str(eval_corpus["records"]))


@pytest.fixture()
def tiny_model():
    torch.manual_seed(1234)
    return ByteLM(ModelConfig(d_model=32, n_layers=2, n_heads=2, d_ff=64, max_len=1792))


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """An untrained but loadable checkpoint, for protocol-level tests."""
    torch.manual_seed(1234)
    model = ByteLM(ModelConfig(d_model=32, n_layers=2, n_heads=2, d_ff=64, max_len=1792))
    path = tmp_path_factory.mktemp("ckpt") / "tiny.pt"
    save_checkpoint(model, str(path), extra={"note": "untrained"})
    return path
