"""Greedy decoding with a key/value cache.

The stop marker is matched on raw bytes.  Generated bytes are returned
as-is; callers decode to text with ``errors="replace"`` since an immature
model can emit partial UTF-8 sequences.
"""

from __future__ import annotations

import torch

from .model import ByteLM
from .records import PAD_ID

STOP_MARKER = b"<|end_response|>"


@torch.no_grad()
def greedy_decode(
    model: ByteLM,
    context: bytes,
    max_new: int = 512,
    stop: bytes = STOP_MARKER,
) -> bytes:
    """Generate up to ``max_new`` bytes after ``context``, greedily.

    Stops early when the output ends with ``stop`` (kept in the output) or
    the position window fills.  When context plus budget exceed the model's
    window the budget gives way first, down to a floor of 64 bytes; past
    that the context is trimmed from the left, since the tail of a
    serialized turn (db results, tag vocabulary) matters more to the
    continuation than a prefix that no longer fits.
    """
    model.eval()
    window = model.config.max_len
    budget = min(max_new, window - 1)
    floor = min(budget, 64)
    overrun = len(context) + budget - window
    if overrun > 0:
        shrink = min(overrun, budget - floor)
        budget -= shrink
        overrun -= shrink
    if overrun > 0:
        context = context[overrun:]
    if not context:
        context = b"\n"

    tokens = torch.tensor([list(context)], dtype=torch.long)
    logits, cache = model(tokens)
    produced = bytearray()
    offset = len(context)
    for _ in range(budget):
        next_id = int(logits[0, -1].argmax())
        if next_id == PAD_ID:
            break
        produced.append(next_id)
        if stop and produced.endswith(stop):
            break
        if offset >= window:
            break
        step = torch.tensor([[next_id]], dtype=torch.long)
        logits, cache = model(step, cache=cache, offset=offset)
        offset += 1
    return bytes(produced)


def generate_text(model: ByteLM, context: str, max_new: int = 512) -> str:
    """Context in, generated target text out."""
    raw = greedy_decode(model, context.encode("utf-8"), max_new=max_new)
    return raw.decode("utf-8", errors="replace")
