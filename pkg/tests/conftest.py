import json
from pathlib import Path

import pytest
from hypothesis import settings

from todkit import builtin_schemas, load_dialogues, load_schemas, synth_corpus
from todkit.corpus import dialogues_to_json, schemas_to_json

settings.register_profile("default", deadline=None)
settings.load_profile("default")

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def schemas():
    return builtin_schemas()


@pytest.fixture(scope="session")
def synth():
    """Closed-loop corpus over the three built-in domains; 24 dialogues is
    enough for every length bucket and split to be populated."""
    return synth_corpus(24, seed=5)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory, synth):
    out = tmp_path_factory.mktemp("synth_corpus")
    (out / "schema.json").write_text(json.dumps(schemas_to_json(synth.schemas)))
    (out / "dialogues_001.json").write_text(json.dumps(dialogues_to_json(synth.dialogues)))
    (out / "split.json").write_text(
        json.dumps({"seen": ["RideShare_1", "StayFinder_1"], "unseen": ["TableSpot_1"]})
    )
    return out


@pytest.fixture(scope="session")
def fixture_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def fixture_schemas():
    return load_schemas(DATA_DIR)


@pytest.fixture(scope="session")
def fixture_dialogues():
    return load_dialogues(DATA_DIR)
