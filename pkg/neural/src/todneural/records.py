"""Training records and batch assembly.

The harness exports one JSON object per line::

    {"full_text": "...", "target_start": 1037, "target_end": 1464}

``full_text`` is a complete serialized turn (context followed by target)
and the two offsets delimit the target span in UTF-8 **bytes**.  Bytes are
the model's tokens, so the offsets index the token sequence directly and
no tokenizer can ever disagree with the file about where the target is.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

import torch

from .errors import RecordError

# Token space: one id per byte value, plus a padding id used only inside
# batches.  PAD never appears in a real sequence, so it doubles as the
# "nothing to predict" label.
PAD_ID = 256
VOCAB_SIZE = 257


@dataclass(frozen=True, slots=True)
class TrainRecord:
    """One serialized turn, tokenized, with its target span."""

    tokens: bytes
    target_start: int
    target_end: int

    def __len__(self) -> int:
        return len(self.tokens)


def record_from_json(obj: object, where: str = "record") -> TrainRecord:
    if not isinstance(obj, dict):
        raise RecordError(f"{where}: not a JSON object")
    text = obj.get("full_text")
    if not isinstance(text, str) or not text:
        raise RecordError(f"{where}: full_text missing or empty")
    start = obj.get("target_start")
    end = obj.get("target_end")
    if not isinstance(start, int) or not isinstance(end, int):
        raise RecordError(f"{where}: target offsets must be integers")
    tokens = text.encode("utf-8")
    if not 0 <= start <= end <= len(tokens):
        raise RecordError(
            f"{where}: span [{start}, {end}) outside 0..{len(tokens)} bytes"
        )
    if start == end:
        raise RecordError(f"{where}: empty target span")
    return TrainRecord(tokens=tokens, target_start=start, target_end=end)


def load_records(path: str) -> list[TrainRecord]:
    """Read an NDJSON record file, validating every line."""
    records: list[TrainRecord] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise RecordError(f"{path}:{lineno}: bad JSON: {exc}") from None
            records.append(record_from_json(obj, where=f"{path}:{lineno}"))
    if not records:
        raise RecordError(f"{path}: no records")
    return records


def make_batch(records: list[TrainRecord]) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad records to a common length.

    Returns ``(tokens, target_mask)``, both ``[B, L]``; the mask is True
    exactly on target-span positions of real (non-pad) tokens.
    """
    if not records:
        raise RecordError("empty batch")
    width = max(len(r) for r in records)
    tokens = torch.full((len(records), width), PAD_ID, dtype=torch.long)
    mask = torch.zeros((len(records), width), dtype=torch.bool)
    for row, record in enumerate(records):
        seq = torch.frombuffer(bytearray(record.tokens), dtype=torch.uint8)
        tokens[row, : len(record)] = seq.long()
        mask[row, record.target_start : record.target_end] = True
    return tokens, mask


def sample_batch(
    records: list[TrainRecord], size: int, rng: random.Random
) -> list[TrainRecord]:
    """Draw a batch without replacement (with, when the corpus is smaller)."""
    if size >= len(records):
        return list(records)
    return [records[i] for i in rng.sample(range(len(records)), size)]
