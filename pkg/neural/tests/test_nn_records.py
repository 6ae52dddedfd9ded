"""Record loading and batch assembly."""

import json
import random

import pytest
import torch

from todneural.errors import RecordError
from todneural.records import (
    PAD_ID,
    TrainRecord,
    load_records,
    make_batch,
    record_from_json,
    sample_batch,
)


def test_loads_every_line(train_corpus, train_records):
    raw = [
        json.loads(line)
        for line in train_corpus["records"].read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    assert len(train_records) == len(raw) > 0
    for record, obj in zip(train_records, raw):
        assert record.tokens == obj["full_text"].encode("utf-8")
        assert record.target_start == obj["target_start"]
        assert record.target_end == obj["target_end"]


def test_target_span_is_the_generation_target(train_records):
    # A property of the exporter, pinned here because training leans on it:
    # the span covers the structured target sections, nothing before them.
    for record in train_records:
        target = record.tokens[record.target_start : record.target_end]
        assert target.startswith(b"<|begin_dialog_state|>")
        assert b"<|end_response|>" in target


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "records.ndjson"
    frame = {"full_text": "abcdef", "target_start": 2, "target_end": 6}
    path.write_text("\n" + json.dumps(frame) + "\n\n", encoding="utf-8")
    records = load_records(str(path))
    assert len(records) == 1
    assert records[0].tokens == b"abcdef"


def test_empty_file_is_an_error(tmp_path):
    path = tmp_path / "empty.ndjson"
    path.write_text("", encoding="utf-8")
    with pytest.raises(RecordError, match="no records"):
        load_records(str(path))


def test_bad_json_reports_line_number(tmp_path):
    path = tmp_path / "broken.ndjson"
    path.write_text('{"full_text": "ab", "target_start": 0, "target_end": 2}\nnot json\n')
    with pytest.raises(RecordError, match="broken.ndjson:2"):
        load_records(str(path))


@pytest.mark.parametrize(
    "obj, complaint",
    [
        ([1, 2], "not a JSON object"),
        ({"target_start": 0, "target_end": 1}, "full_text"),
        ({"full_text": "", "target_start": 0, "target_end": 0}, "full_text"),
        ({"full_text": "ab", "target_start": "0", "target_end": 2}, "integers"),
        ({"full_text": "ab", "target_start": 0, "target_end": 9}, "outside"),
        ({"full_text": "ab", "target_start": -1, "target_end": 2}, "outside"),
        ({"full_text": "ab", "target_start": 2, "target_end": 1}, "outside"),
        ({"full_text": "ab", "target_start": 1, "target_end": 1}, "empty target"),
    ],
)
def test_record_validation(obj, complaint):
    with pytest.raises(RecordError, match=complaint):
        record_from_json(obj)


def test_offsets_are_bytes_not_characters():
    # Multi-byte UTF-8 before the target: character offsets would misplace it.
    text = "␟␟ target"
    start = len("␟␟ ".encode("utf-8"))
    record = record_from_json(
        {"full_text": text, "target_start": start, "target_end": start + 6}
    )
    assert record.tokens[record.target_start : record.target_end] == b"target"


def test_make_batch_pads_and_masks():
    records = [
        TrainRecord(tokens=b"abcdefgh", target_start=4, target_end=8),
        TrainRecord(tokens=b"xy", target_start=0, target_end=2),
    ]
    tokens, mask = make_batch(records)
    assert tokens.shape == mask.shape == (2, 8)
    assert tokens[0].tolist() == list(b"abcdefgh")
    assert tokens[1].tolist() == list(b"xy") + [PAD_ID] * 6
    assert mask[0].tolist() == [False] * 4 + [True] * 4
    assert mask[1].tolist() == [True] * 2 + [False] * 6


def test_make_batch_rejects_nothing_to_batch():
    with pytest.raises(RecordError):
        make_batch([])


def test_make_batch_round_trips_real_records(train_records):
    batch = train_records[:5]
    tokens, mask = make_batch(batch)
    for row, record in enumerate(batch):
        seq = tokens[row, : len(record)]
        assert bytes(seq.tolist()) == record.tokens
        marked = torch.nonzero(mask[row]).flatten().tolist()
        assert marked == list(range(record.target_start, record.target_end))


def test_sample_batch_behaviour(train_records):
    rng = random.Random(7)
    batch = sample_batch(train_records, 6, rng)
    assert len(batch) == 6
    assert len({id(r) for r in batch}) == 6  # without replacement
    assert sample_batch(train_records, 10_000, random.Random(0)) == train_records
    again = sample_batch(train_records, 6, random.Random(7))
    assert again == batch
