# src/captioning/models.py
"""
Caption models. Both families share the audio front end (an optional per-layer code
embedding, then one conv with kernel 3 and stride 3) and expose the same interface:

    condition(x)            audio batch -> conditioning state
    decode(state, tokens)   teacher-forced logits, one row per input token
    start / next_log_probs  the incremental protocol used by beam search
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import torch
from torch import nn

from substrate import (CAUSAL, Conv1d, Embedding, Linear, TransformerBlock, conv_output_length, freeze,
                       make_generator, uniform_init_)

logger = logging.getLogger(__name__)

DOWNSAMPLE = 3


@dataclass
class CaptionerConfig:
    kind: str = "encdec"
    width: int = 128
    layers: int = 2
    heads: int = 4
    ff_mult: int = 4
    k_prefix: int = 50
    mapping_heads: int = 8
    lm_layers: int = 2
    lm_heads: int = 4
    lm_epochs: int = 20
    lm_lr: float = 1e-3
    max_len: int = 30
    max_frames: int = 600
    code_dim: int = 64
    epochs: int = 30
    batch: int = 8
    lr: float = 3e-4
    weight_decay: float = 0.0
    beam: int = 3
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Dict) -> "CaptionerConfig":
        known = {k: v for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


def batchify(x: torch.Tensor, codes: bool) -> torch.Tensor:
    """Adds the batch axis to a single T x D feature matrix or L x T code matrix."""
    if x.dim() == 2:
        return x.unsqueeze(0)
    if x.dim() == 3:
        return x
    expected = "L x T codes" if codes else "T x D features"
    raise ValueError(f"expected {expected}, optionally batched, got shape {tuple(x.shape)}")


class AudioFrontEnd(nn.Module):
    def __init__(self, input_dim: int, width: int, generator: torch.Generator,
                 code_sizes: Optional[Sequence[int]] = None, code_dim: int = 64):
        super().__init__()
        self.code_sizes = tuple(code_sizes) if code_sizes else None
        if self.code_sizes:
            # raw codes: one learned table per token layer, summed
            self.code_embeddings = nn.ModuleList(Embedding(K, code_dim, generator) for K in self.code_sizes)
            input_dim = code_dim
        else:
            self.code_embeddings = None
        self.input_dim = input_dim
        self.conv = Conv1d(input_dim, width, DOWNSAMPLE, generator, stride=DOWNSAMPLE)

    @property
    def uses_codes(self) -> bool:
        return self.code_embeddings is not None

    def output_length(self, T: int) -> int:
        return conv_output_length(T, DOWNSAMPLE, DOWNSAMPLE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.uses_codes:
            if x.dim() != 3 or x.shape[1] != len(self.code_embeddings):
                raise ValueError(f"expected B x {len(self.code_embeddings)} x T codes, got shape {tuple(x.shape)}")
            x = sum(emb(x[:, layer]) for layer, emb in enumerate(self.code_embeddings))
        if x.shape[-2] < DOWNSAMPLE:
            raise ValueError(f"audio input of {x.shape[-2]} frames is shorter than the {DOWNSAMPLE}-frame conv")
        return self.conv(x)


class DecodingMixin:
    """Incremental decoding on top of `condition` / `decode`."""

    def prepare(self, audio) -> torch.Tensor:
        codes = self.front.uses_codes
        x = torch.as_tensor(audio)
        x = x.long() if codes else x.to(next(self.parameters()).dtype)
        return batchify(x, codes)

    @torch.no_grad()
    def start(self, audio):
        return self.condition(self.prepare(audio))

    @torch.no_grad()
    def next_log_probs(self, state: torch.Tensor, prefixes: List[List[int]]) -> torch.Tensor:
        tokens = torch.tensor(prefixes, dtype=torch.long)
        expanded = state.expand(tokens.shape[0], *state.shape[1:])
        return torch.log_softmax(self.decode(expanded, tokens)[:, -1], dim=-1)


class EncDecCaptioner(DecodingMixin, nn.Module):
    """Conv-only audio encoder and a causal transformer decoder with cross-attention."""

    kind = "encdec"

    def __init__(self, input_dim: int, vocab_size: int, cfg: CaptionerConfig,
                 code_sizes: Optional[Sequence[int]] = None):
        super().__init__()
        generator = make_generator(cfg.seed)
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.front = AudioFrontEnd(input_dim, cfg.width, generator, code_sizes, cfg.code_dim)
        self.token_embedding = Embedding(vocab_size, cfg.width, generator)
        self.positions = Embedding(cfg.max_len + 2, cfg.width, generator)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.width, cfg.heads, generator, ff_mult=cfg.ff_mult, cross_attention=True)
            for _ in range(cfg.layers)
        )
        self.ln_out = nn.LayerNorm(cfg.width)
        self.out_proj = Linear(cfg.width, vocab_size, generator)

    def condition(self, x: torch.Tensor) -> torch.Tensor:
        return self.front(x)

    def decode(self, memory: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        m = tokens.shape[1]
        if m > self.positions.num_embeddings:
            raise ValueError(f"caption of {m} tokens exceeds the decoder's {self.positions.num_embeddings} positions")
        h = self.token_embedding(tokens) + self.positions(torch.arange(m))
        for block in self.blocks:
            h = block(h, memory=memory, mask=CAUSAL)
        return self.out_proj(self.ln_out(h))

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        return self.decode(self.condition(x), tokens)


class FrozenLM(nn.Module):
    """Small decoder-only language model; pretrained on captions, then frozen."""

    def __init__(self, vocab_size: int, width: int, layers: int, heads: int, max_positions: int,
                 generator: torch.Generator, ff_mult: int = 4):
        super().__init__()
        self.vocab_size = vocab_size
        self.width = width
        self.token_embedding = Embedding(vocab_size, width, generator)
        self.positions = Embedding(max_positions, width, generator)
        self.blocks = nn.ModuleList(TransformerBlock(width, heads, generator, ff_mult=ff_mult) for _ in range(layers))
        self.ln_out = nn.LayerNorm(width)
        self.out_proj = Linear(width, vocab_size, generator)

    @property
    def max_positions(self) -> int:
        return self.positions.num_embeddings

    def embed_tokens(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.token_embedding(tokens)

    def forward_embeddings(self, embeddings: torch.Tensor, offset: int = 0) -> torch.Tensor:
        L = embeddings.shape[-2]
        if offset + L > self.max_positions:
            raise ValueError(f"sequence of {L} at offset {offset} exceeds {self.max_positions} LM positions")
        h = embeddings + self.positions(torch.arange(offset, offset + L))
        for block in self.blocks:
            h = block(h, mask=CAUSAL)
        return self.out_proj(self.ln_out(h))

    def forward(self, tokens: torch.Tensor, offset: int = 0) -> torch.Tensor:
        return self.forward_embeddings(self.embed_tokens(tokens), offset)


def build_frozen_lm(vocab_size: int, cfg: CaptionerConfig) -> FrozenLM:
    return FrozenLM(vocab_size, cfg.width, cfg.lm_layers, cfg.lm_heads, cfg.k_prefix + cfg.max_len + 2,
                    make_generator(cfg.seed + 7), ff_mult=cfg.ff_mult)


class PrefixCaptioner(DecodingMixin, nn.Module):
    """
    Downsampled audio plus k learnable prefix embeddings go through a one-layer mapping
    network; its last k outputs are the prefix fed to the frozen LM ahead of the caption.
    """

    kind = "prefix"

    def __init__(self, input_dim: int, lm: FrozenLM, cfg: CaptionerConfig,
                 code_sizes: Optional[Sequence[int]] = None):
        super().__init__()
        generator = make_generator(cfg.seed)
        width = lm.width
        self.cfg = cfg
        self.k = cfg.k_prefix
        self.vocab_size = lm.vocab_size
        self.front = AudioFrontEnd(input_dim, width, generator, code_sizes, cfg.code_dim)
        self.prefix_embeddings = nn.Parameter(uniform_init_(torch.empty(self.k, width), self.k, width, generator))
        max_audio = self.front.output_length(max(cfg.max_frames, DOWNSAMPLE))
        self.mapping_positions = Embedding(max_audio + self.k, width, generator)
        self.mapping = TransformerBlock(width, cfg.mapping_heads, generator, ff_mult=cfg.ff_mult)
        self.lm = freeze(lm)

    def train(self, mode: bool = True):
        super().train(mode)
        self.lm.eval()
        return self

    def mapping_input(self, x: torch.Tensor) -> torch.Tensor:
        """Downsampled audio followed by the prefix embeddings, with positions: B x (T'+k) x W."""
        audio = self.front(x)
        prefix = self.prefix_embeddings.unsqueeze(0).expand(audio.shape[0], -1, -1)
        seq = torch.cat([audio, prefix], dim=1)
        if seq.shape[1] > self.mapping_positions.num_embeddings:
            raise ValueError(f"mapping input of {seq.shape[1]} positions exceeds "
                             f"{self.mapping_positions.num_embeddings}; raise max_frames")
        return seq + self.mapping_positions(torch.arange(seq.shape[1]))

    def condition(self, x: torch.Tensor) -> torch.Tensor:
        """The last k mapping-network outputs; the audio positions are discarded."""
        return self.mapping(self.mapping_input(x))[:, -self.k:]

    def decode(self, prefix: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        if prefix.shape[1] != self.k:
            raise ValueError(f"language model expects exactly {self.k} prefix vectors, got {prefix.shape[1]}")
        embeddings = torch.cat([prefix, self.lm.embed_tokens(tokens)], dim=1)
        return self.lm.forward_embeddings(embeddings)[:, self.k:]

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        return self.decode(self.condition(x), tokens)


def prefix_forward(model: PrefixCaptioner, features) -> torch.Tensor:
    """k x W prefix vectors for one clip (or B x k x W for a batch)."""
    x = model.prepare(features)
    prefix = model.condition(x)
    return prefix.squeeze(0) if torch.as_tensor(features).dim() == 2 else prefix
