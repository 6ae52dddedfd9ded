"""A small causal transformer over bytes.

Nothing exotic: learned position embeddings, pre-norm blocks, tied output
head.  The one structural concession to running on modest CPUs is the
key/value cache threaded through ``forward``, which turns greedy decoding
from quadratic re-encoding into one cheap step per byte.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, NeuralError
from .records import VOCAB_SIZE

# One (key, value) pair per layer, each [B, heads, seen, head_dim].
LayerCache = list[tuple[torch.Tensor, torch.Tensor]]

CHECKPOINT_KIND = "todneural-bytelm"


@dataclass(frozen=True, slots=True)
class ModelConfig:
    d_model: int = 128
    n_layers: int = 3
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 1792

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads:
            raise NeuralError("d_model must divide evenly into heads")


class Block(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.n_heads = config.n_heads
        self.qkv = nn.Linear(config.d_model, 3 * config.d_model)
        self.proj = nn.Linear(config.d_model, config.d_model)
        self.ln1 = nn.LayerNorm(config.d_model)
        self.ln2 = nn.LayerNorm(config.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(config.d_model, config.d_ff),
            nn.GELU(),
            nn.Linear(config.d_ff, config.d_model),
        )

    def forward(
        self, x: torch.Tensor, past: tuple[torch.Tensor, torch.Tensor] | None
    ) -> tuple[torch.Tensor, tuple[torch.Tensor, torch.Tensor]]:
        batch, length, width = x.shape
        q, k, v = self.qkv(self.ln1(x)).chunk(3, dim=-1)
        shape = (batch, length, self.n_heads, width // self.n_heads)
        q = q.view(shape).transpose(1, 2)
        k = k.view(shape).transpose(1, 2)
        v = v.view(shape).transpose(1, 2)
        if past is not None:
            k = torch.cat([past[0], k], dim=2)
            v = torch.cat([past[1], v], dim=2)
        # With a cache the new positions sit at the end of the key axis, so
        # plain causal masking would be wrong; a fresh pass is the one place
        # that needs it.
        causal = past is None and length > 1
        attended = F.scaled_dot_product_attention(q, k, v, is_causal=causal)
        attended = attended.transpose(1, 2).reshape(batch, length, width)
        x = x + self.proj(attended)
        x = x + self.mlp(self.ln2(x))
        return x, (k, v)


class ByteLM(nn.Module):
    def __init__(self, config: ModelConfig | None = None) -> None:
        super().__init__()
        self.config = config or ModelConfig()
        self.token_embedding = nn.Embedding(VOCAB_SIZE, self.config.d_model)
        self.position_embedding = nn.Embedding(self.config.max_len, self.config.d_model)
        self.blocks = nn.ModuleList(
            Block(self.config) for _ in range(self.config.n_layers)
        )
        self.final_norm = nn.LayerNorm(self.config.d_model)
        self.head = nn.Linear(self.config.d_model, VOCAB_SIZE, bias=False)
        self.head.weight = self.token_embedding.weight
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(module: nn.Module) -> None:
        # Small init keeps the tied head's starting logits near zero, which
        # matters a lot for how fast byte-level training gets moving.
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, std=0.02)
            if isinstance(module, nn.Linear) and module.bias is not None:
                nn.init.zeros_(module.bias)

    def forward(
        self,
        tokens: torch.Tensor,
        cache: LayerCache | None = None,
        offset: int = 0,
    ) -> tuple[torch.Tensor, LayerCache]:
        """Logits for each position, plus the updated cache.

        ``offset`` is how many positions the cache already covers; pass the
        cache back in with the next chunk to continue a sequence.
        """
        if offset + tokens.size(1) > self.config.max_len:
            raise NeuralError(
                f"sequence of {offset + tokens.size(1)} exceeds max_len "
                f"{self.config.max_len}"
            )
        positions = torch.arange(offset, offset + tokens.size(1), device=tokens.device)
        hidden = self.token_embedding(tokens) + self.position_embedding(positions)
        new_cache: LayerCache = []
        for index, block in enumerate(self.blocks):
            past = cache[index] if cache is not None else None
            hidden, present = block(hidden, past)
            new_cache.append(present)
        return self.head(self.final_norm(hidden)), new_cache

    def parameter_count(self) -> int:
        seen: set[int] = set()
        total = 0
        for parameter in self.parameters():
            if id(parameter) not in seen:
                seen.add(id(parameter))
                total += parameter.numel()
        return total


def save_checkpoint(model: ByteLM, path: str, extra: dict | None = None) -> None:
    payload = {
        "kind": CHECKPOINT_KIND,
        "config": asdict(model.config),
        "state_dict": model.state_dict(),
        "extra": dict(extra or {}),
    }
    torch.save(payload, path)


def load_checkpoint(path: str) -> tuple[ByteLM, dict]:
    """Rebuild a model from disk; returns ``(model, extra)``."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(payload, dict) or payload.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_KIND} checkpoint")
    model = ByteLM(ModelConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload.get("extra", {})
