"""Transformer mechanics: causality, the KV cache, checkpoints, decoding."""

from types import SimpleNamespace

import pytest
import torch

from todneural.decoding import greedy_decode
from todneural.errors import CheckpointError, NeuralError
from todneural.model import ByteLM, ModelConfig, load_checkpoint, save_checkpoint
from todneural.records import PAD_ID, VOCAB_SIZE


def test_forward_shapes(tiny_model):
    tokens = torch.randint(0, 256, (3, 17))
    logits, cache = tiny_model(tokens)
    assert logits.shape == (3, 17, VOCAB_SIZE)
    assert len(cache) == tiny_model.config.n_layers
    for key, value in cache:
        assert key.shape == value.shape == (3, 2, 17, 16)


def test_future_tokens_cannot_reach_past_logits(tiny_model):
    tokens = torch.randint(0, 256, (1, 40))
    changed = tokens.clone()
    changed[0, 30] = (changed[0, 30] + 1) % 256
    with torch.no_grad():
        base, _ = tiny_model(tokens)
        swapped, _ = tiny_model(changed)
    assert torch.equal(base[:, :30], swapped[:, :30])
    assert not torch.equal(base[:, 30:], swapped[:, 30:])


def test_cached_forward_matches_full_forward(tiny_model):
    tokens = torch.randint(0, 256, (1, 48))
    with torch.no_grad():
        full, _ = tiny_model(tokens)
        logits, cache = tiny_model(tokens[:, :24])
        assert torch.allclose(logits[:, -1], full[:, 23], atol=1e-5)
        for position in range(24, 48):
            logits, cache = tiny_model(
                tokens[:, position : position + 1], cache=cache, offset=position
            )
            assert torch.allclose(logits[:, -1], full[:, position], atol=1e-5)


def test_greedy_decode_matches_uncached_greedy(tiny_model):
    context = bytes(range(65, 97)) * 2  # 64 deterministic bytes

    def naive(max_new: int) -> bytes:
        toks = list(context)
        out = []
        with torch.no_grad():
            for _ in range(max_new):
                logits, _ = tiny_model(torch.tensor([toks]))
                nxt = int(logits[0, -1].argmax())
                if nxt == PAD_ID:
                    break
                out.append(nxt)
                toks.append(nxt)
        return bytes(out)

    assert greedy_decode(tiny_model, context, max_new=24, stop=b"") == naive(24)


class Scripted:
    """Stand-in model that deterministically continues a planned stream."""

    def __init__(self, planned: bytes, max_len: int = 64):
        self.planned = planned
        self.config = SimpleNamespace(max_len=max_len)

    def eval(self):
        return self

    def __call__(self, tokens, cache=None, offset=0):
        seen = offset + tokens.size(1) if cache is not None else tokens.size(1)
        logits = torch.full((1, tokens.size(1), VOCAB_SIZE), -10.0)
        nxt = self.planned[seen] if seen < len(self.planned) else PAD_ID
        logits[0, -1, nxt] = 10.0
        return logits, cache or []


def test_decode_stops_after_stop_marker():
    context = b"ctx:"
    model = Scripted(context + b"fine.<|end_response|>IGNORED")
    out = greedy_decode(model, context, max_new=60)
    assert out == b"fine.<|end_response|>"


def test_decode_stops_at_pad():
    context = b"ctx:"
    model = Scripted(context + b"hi")  # then the script runs out -> PAD
    assert greedy_decode(model, context, max_new=60, stop=b"") == b"hi"


def test_decode_honours_max_new():
    context = b"c"
    model = Scripted(context + b"x" * 50)
    assert greedy_decode(model, context, max_new=7, stop=b"") == b"x" * 7


def test_decode_trims_oversized_context_from_the_left():
    # window 64, budget 32 (at its floor already): a 100-byte context must
    # lose its first 68 bytes, and the scripted model proves which 32 the
    # decode actually saw.
    context = bytes((i % 200) + 30 for i in range(100))
    kept = context[68:]
    model = Scripted(kept + b"ok<|end_response|>", max_len=64)
    out = greedy_decode(model, context, max_new=32)
    assert out == b"ok<|end_response|>"


def test_decode_prefers_shrinking_budget_over_context():
    # window 128, context 60, max_new 100: the overrun of 32 comes out of
    # the generation budget (100 -> 68), not the context.  A trimmed
    # context would desynchronize the script and leak non-"y" bytes.
    context = bytes((i % 200) + 30 for i in range(60))
    model = Scripted(context + b"y" * 80, max_len=128)
    out = greedy_decode(model, context, max_new=100, stop=b"")
    assert out == b"y" * 68


def test_checkpoint_round_trip(tiny_model, tmp_path):
    path = tmp_path / "model.pt"
    save_checkpoint(tiny_model, str(path), extra={"objective": "full", "steps": 3})
    loaded, extra = load_checkpoint(str(path))
    assert extra == {"objective": "full", "steps": 3}
    assert loaded.config == tiny_model.config
    tokens = torch.randint(0, 256, (2, 9))
    with torch.no_grad():
        a, _ = tiny_model(tokens)
        b, _ = loaded(tokens)
    assert torch.equal(a, b)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.pt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(str(path))


def test_checkpoint_rejects_foreign_payloads(tmp_path):
    path = tmp_path / "foreign.pt"
    torch.save({"kind": "something-else"}, str(path))
    with pytest.raises(CheckpointError, match="not a todneural"):
        load_checkpoint(str(path))


def test_tied_head_counts_once(tiny_model):
    assert tiny_model.head.weight is tiny_model.token_embedding.weight
    state_total = sum(v.numel() for v in tiny_model.state_dict().values())
    assert state_total == tiny_model.parameter_count() + VOCAB_SIZE * 32


def test_config_guards():
    with pytest.raises(NeuralError, match="heads"):
        ModelConfig(d_model=30, n_heads=4)
    small = ByteLM(ModelConfig(d_model=16, n_layers=1, n_heads=2, d_ff=16, max_len=8))
    with pytest.raises(NeuralError, match="max_len"):
        small(torch.zeros((1, 9), dtype=torch.long))
