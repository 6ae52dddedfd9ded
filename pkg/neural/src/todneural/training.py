"""Training loop and the two loss objectives.

Models are trained in two passes over the same records.  The first pass
("full") applies next-byte loss to the whole record, context included, so
the model absorbs the serialization format end to end.  The second pass
("target") restricts the loss to the record's target span: context bytes
still condition the prediction but no longer spend gradient, which shifts
capacity toward the part the harness actually reads back.

A record's bytes occupy positions ``0..n``; the logits at position ``i``
predict byte ``i + 1``.  The target mask therefore lands on *label*
positions: byte ``j`` contributes loss iff ``target_start <= j < end``.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from typing import Callable

import torch
import torch.nn.functional as F

from .errors import NeuralError
from .model import ByteLM
from .records import PAD_ID, VOCAB_SIZE, TrainRecord, make_batch, sample_batch

OBJECTIVES = ("full", "target")

IGNORE = -100  # cross_entropy's ignore_index


def sequence_loss(
    model: ByteLM, tokens: torch.Tensor, target_mask: torch.Tensor | None = None
) -> torch.Tensor:
    """Mean next-byte cross-entropy, optionally restricted to a span mask.

    ``tokens`` is ``[B, L]`` padded with PAD_ID; ``target_mask`` (same
    shape) marks the label bytes that count.  Pad positions never count.
    """
    logits, _ = model(tokens[:, :-1])
    labels = tokens[:, 1:].clone()
    keep = labels != PAD_ID
    if target_mask is not None:
        keep &= target_mask[:, 1:]
    labels[~keep] = IGNORE
    return F.cross_entropy(
        logits.reshape(-1, VOCAB_SIZE), labels.reshape(-1), ignore_index=IGNORE
    )


@dataclass(frozen=True, slots=True)
class TrainSettings:
    objective: str = "full"
    steps: int = 700
    batch_size: int = 6
    peak_lr: float = 1.5e-3
    warmup: int = 30
    seed: int = 0
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise NeuralError(f"objective must be one of {OBJECTIVES}")
        if self.steps < 1 or self.batch_size < 1:
            raise NeuralError("steps and batch_size must be positive")


def _lr_at(step: int, settings: TrainSettings) -> float:
    # Linear warmup, then cosine down to a 10% floor.
    if step < settings.warmup:
        return settings.peak_lr * (step + 1) / settings.warmup
    span = max(1, settings.steps - settings.warmup)
    progress = (step - settings.warmup) / span
    floor = 0.1 * settings.peak_lr
    return floor + (settings.peak_lr - floor) * 0.5 * (1 + math.cos(math.pi * progress))


def train(
    model: ByteLM,
    records: list[TrainRecord],
    settings: TrainSettings,
    progress: Callable[[str], None] | None = None,
) -> float:
    """Run one training pass in place; returns the final step's loss."""
    if not records:
        raise NeuralError("no records to train on")
    rng = random.Random(settings.seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=settings.peak_lr)
    model.train()
    started = time.perf_counter()
    last = float("nan")
    for step in range(settings.steps):
        lr = _lr_at(step, settings)
        for group in optimizer.param_groups:
            group["lr"] = lr
        batch = sample_batch(records, settings.batch_size, rng)
        tokens, mask = make_batch(batch)
        loss = sequence_loss(
            model, tokens, mask if settings.objective == "target" else None
        )
        optimizer.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
        optimizer.step()
        last = loss.item()
        if progress and (step % settings.log_every == 0 or step == settings.steps - 1):
            elapsed = time.perf_counter() - started
            progress(f"step {step} loss {last:.4f} lr {lr:.2e} ({elapsed:.0f}s)")
    model.eval()
    return last


@torch.no_grad()
def held_out_perplexity(
    model: ByteLM, records: list[TrainRecord], batch_size: int = 4
) -> float:
    """Per-byte perplexity over target spans, exact over the whole list.

    Sums log-loss byte by byte rather than averaging batch means, so the
    result does not depend on how records are grouped.
    """
    if not records:
        raise NeuralError("no records to evaluate")
    model.eval()
    total = 0.0
    count = 0
    for start in range(0, len(records), batch_size):
        tokens, mask = make_batch(records[start : start + batch_size])
        logits, _ = model(tokens[:, :-1])
        labels = tokens[:, 1:].clone()
        keep = (labels != PAD_ID) & mask[:, 1:]
        labels[~keep] = IGNORE
        total += F.cross_entropy(
            logits.reshape(-1, VOCAB_SIZE),
            labels.reshape(-1),
            ignore_index=IGNORE,
            reduction="sum",
        ).item()
        count += int(keep.sum())
    return math.exp(total / count)
