# src/substrate/attention.py

import math
from typing import Optional, Union

import torch
import torch.nn.functional as F
from torch import nn

from .layers import Linear

CAUSAL = "causal"


def causal_mask(T_q: int, T_k: Optional[int] = None, device=None) -> torch.Tensor:
    """Boolean mask, True where query i may attend key j (j <= i, right-aligned)."""
    T_k = T_q if T_k is None else T_k
    return torch.ones(T_q, T_k, dtype=torch.bool, device=device).tril(diagonal=T_k - T_q)


def multi_head_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, heads: int,
                         mask: Optional[Union[torch.Tensor, str]] = None,
                         return_weights: bool = False):
    """
    Scaled dot-product attention split over `heads`.
    Inputs are T x D or B x T x D; `mask` is a boolean (.., Tq, Tk) tensor of allowed
    positions or the string "causal".
    """
    D = q.shape[-1]
    if D % heads != 0:
        raise ValueError(f"attention width {D} is not divisible by {heads} heads")
    squeeze = q.dim() == 2
    if squeeze:
        q, k, v = q.unsqueeze(0), k.unsqueeze(0), v.unsqueeze(0)
    B, T_q, _ = q.shape
    T_k = k.shape[1]
    dh = D // heads

    def split(t: torch.Tensor) -> torch.Tensor:
        return t.reshape(t.shape[0], t.shape[1], heads, dh).transpose(1, 2)

    scores = split(q) @ split(k).transpose(-1, -2) / math.sqrt(dh)
    if isinstance(mask, str):
        if mask != CAUSAL:
            raise ValueError(f"unknown attention mask {mask!r}")
        mask = causal_mask(T_q, T_k, device=q.device)
    if mask is not None:
        if mask.dim() == 3:
            mask = mask.unsqueeze(1)
        scores = scores.masked_fill(~mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    out = (weights @ split(v)).transpose(1, 2).reshape(B, T_q, D)
    if squeeze:
        out, weights = out.squeeze(0), weights.squeeze(0)
    return (out, weights) if return_weights else out


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, heads: int, generator: torch.Generator):
        super().__init__()
        if d_model % heads != 0:
            raise ValueError(f"attention width {d_model} is not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = Linear(d_model, d_model, generator)
        self.k_proj = Linear(d_model, d_model, generator)
        self.v_proj = Linear(d_model, d_model, generator)
        self.out_proj = Linear(d_model, d_model, generator)

    def forward(self, x: torch.Tensor, context: Optional[torch.Tensor] = None,
                mask: Optional[Union[torch.Tensor, str]] = None) -> torch.Tensor:
        context = x if context is None else context
        out = multi_head_attention(self.q_proj(x), self.k_proj(context), self.v_proj(context), self.heads, mask)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, hidden: int, generator: torch.Generator):
        super().__init__()
        self.fc1 = Linear(d_model, hidden, generator)
        self.fc2 = Linear(hidden, d_model, generator)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class TransformerBlock(nn.Module):
    """Pre-layer-norm block: self-attention, optional cross-attention, GELU MLP."""

    def __init__(self, d_model: int, heads: int, generator: torch.Generator,
                 ff_mult: int = 4, cross_attention: bool = False):
        super().__init__()
        self.ln_self = nn.LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, heads, generator)
        self.cross_attention = cross_attention
        if cross_attention:
            self.ln_cross = nn.LayerNorm(d_model)
            self.cross_attn = MultiHeadAttention(d_model, heads, generator)
        self.ln_ff = nn.LayerNorm(d_model)
        self.ff = FeedForward(d_model, ff_mult * d_model, generator)

    def forward(self, x: torch.Tensor, memory: Optional[torch.Tensor] = None,
                mask: Optional[Union[torch.Tensor, str]] = None) -> torch.Tensor:
        x = x + self.self_attn(self.ln_self(x), mask=mask)
        if self.cross_attention:
            if memory is None:
                raise ValueError("cross-attention block called without encoder memory")
            x = x + self.cross_attn(self.ln_cross(x), context=memory)
        return x + self.ff(self.ln_ff(x))
