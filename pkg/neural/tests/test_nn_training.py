"""Loss objectives and the training loop.

The mask-loss identity test is the load-bearing one: the batched, padded,
mask-driven loss must equal a loss computed record by record with plain
slicing, or the second training pass would not be optimizing what it
claims to.
"""

import math
import random

import pytest
import torch
import torch.nn.functional as F

from todneural.errors import NeuralError
from todneural.model import ByteLM, ModelConfig
from todneural.records import make_batch, sample_batch
from todneural.training import TrainSettings, held_out_perplexity, sequence_loss, train


def sliced_reference_loss(model, records) -> float:
    """Masked loss with no batching, no padding and no mask tensor.

    Each record is encoded alone at its natural length; the target bytes
    are picked out by slicing logits directly against byte positions.
    """
    total = 0.0
    count = 0
    with torch.no_grad():
        for record in records:
            tokens = torch.tensor([list(record.tokens)], dtype=torch.long)
            logits, _ = model(tokens[:, :-1])
            start = max(record.target_start, 1)  # byte 0 has no predictor
            end = record.target_end
            span_logits = logits[0, start - 1 : end - 1].double()
            span_labels = tokens[0, start:end]
            total += F.cross_entropy(span_logits, span_labels, reduction="sum").item()
            count += end - start
    return total / count


def test_mask_loss_identity_on_random_batches(train_records, tiny_model):
    rng = random.Random(20260814)
    worst = 0.0
    for _ in range(10):
        batch = sample_batch(train_records, 5, rng)
        tokens, mask = make_batch(batch)
        with torch.no_grad():
            batched = sequence_loss(tiny_model, tokens, mask).item()
        reference = sliced_reference_loss(tiny_model, batch)
        worst = max(worst, abs(batched - reference))
        assert batched == pytest.approx(reference, abs=1e-5)
    assert worst <= 1e-5


def test_full_objective_is_the_all_true_mask(train_records, tiny_model):
    tokens, _ = make_batch(train_records[:4])
    everything = torch.ones_like(tokens, dtype=torch.bool)
    with torch.no_grad():
        implicit = sequence_loss(tiny_model, tokens).item()
        explicit = sequence_loss(tiny_model, tokens, everything).item()
    assert implicit == pytest.approx(explicit, abs=1e-7)


def test_masked_loss_ignores_pad_rows(tiny_model):
    # A batch where one record is much shorter: its pad tail must not
    # contribute, which the sliced reference would not tolerate anyway.
    from todneural.records import TrainRecord

    records = [
        TrainRecord(tokens=b"context|answer one", target_start=8, target_end=18),
        TrainRecord(tokens=b"c|b", target_start=2, target_end=3),
    ]
    tokens, mask = make_batch(records)
    with torch.no_grad():
        batched = sequence_loss(tiny_model, tokens, mask).item()
    assert batched == pytest.approx(sliced_reference_loss(tiny_model, records), abs=1e-5)


def test_untrained_model_sits_near_uniform(eval_records, tiny_model):
    perplexity = held_out_perplexity(tiny_model, eval_records[:12])
    assert 230 < perplexity < 290  # 257 symbols, near-zero initial logits


def test_perplexity_independent_of_batching(eval_records, tiny_model):
    subset = eval_records[:11]
    a = held_out_perplexity(tiny_model, subset, batch_size=3)
    b = held_out_perplexity(tiny_model, subset, batch_size=7)
    assert a == pytest.approx(b, rel=1e-6)


def test_settings_validation():
    with pytest.raises(NeuralError, match="objective"):
        TrainSettings(objective="both")
    with pytest.raises(NeuralError, match="positive"):
        TrainSettings(steps=0)
    with pytest.raises(NeuralError, match="positive"):
        TrainSettings(batch_size=0)


def test_train_needs_records(tiny_model):
    with pytest.raises(NeuralError, match="no records"):
        train(tiny_model, [], TrainSettings(steps=1))


def test_short_training_run_learns(train_records):
    torch.manual_seed(5)
    model = ByteLM(ModelConfig(d_model=32, n_layers=2, n_heads=2, d_ff=64, max_len=1792))
    subset = train_records[:16]
    before = held_out_perplexity(model, subset)
    lines: list[str] = []
    settings = TrainSettings(
        objective="full", steps=25, batch_size=4, peak_lr=3e-3,
        warmup=5, seed=3, log_every=10,
    )
    final = train(model, subset, settings, progress=lines.append)
    after = held_out_perplexity(model, subset)
    assert math.isfinite(final)
    assert after < before * 0.5
    assert not model.training  # left in eval mode
    assert lines and lines[0].startswith("step 0 ") and "step 24 " in lines[-1]
