# src/corpus/encoder.py

import copy
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np
import torch
from torch import nn

from substrate import Linear, TransformerBlock, freeze, make_generator, sinusoidal_positions

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, torch.Tensor]


@dataclass
class EncoderConfig:
    F: int = 32
    width: int = 64
    layers: int = 12
    heads: int = 4
    ff_mult: int = 2
    seed: int = 1234

    @classmethod
    def from_dict(cls, data: Dict) -> "EncoderConfig":
        known = {k: v for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


class FrozenEncoder(nn.Module):
    """
    Seeded random-weight layered encoder standing in for a pretrained tagging backbone.
    Input projection F -> D plus sinusoidal positions, then `layers` pre-LN transformer blocks; never trainable.
    """

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        generator = make_generator(cfg.seed)
        self.input_proj = Linear(cfg.F, cfg.width, generator)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.width, cfg.heads, generator, ff_mult=cfg.ff_mult) for _ in range(cfg.layers)
        )
        freeze(self)

    @property
    def n_layers(self) -> int:
        return len(self.blocks)

    @property
    def width(self) -> int:
        return self.cfg.width

    def train(self, mode: bool = True):
        # always evaluated as an inference-only module
        return super().train(False)

    def _check_layer(self, layer: int) -> None:
        if not 1 <= layer <= self.n_layers:
            raise ValueError(f"layer {layer} out of range [1, {self.n_layers}]")

    def embed(self, frames: torch.Tensor) -> torch.Tensor:
        x = self.input_proj(frames)
        return x + sinusoidal_positions(x.shape[-2], self.width, dtype=x.dtype)

    def forward_from(self, hidden: torch.Tensor, start: int, stop: Optional[int] = None) -> torch.Tensor:
        """Applies blocks start+1..stop (1-based layer numbers) to a residual-stream state."""
        for block in self.blocks[start:stop]:
            hidden = block(hidden)
        return hidden

    def layer_output(self, frames: torch.Tensor, layer: int) -> torch.Tensor:
        """Residual stream after `layer` blocks; sequence length preserved."""
        self._check_layer(layer)
        return self.forward_from(self.embed(frames), 0, layer)

    def all_layers(self, frames: torch.Tensor) -> List[torch.Tensor]:
        hidden = self.embed(frames)
        outputs = []
        for block in self.blocks:
            hidden = block(hidden)
            outputs.append(hidden)
        return outputs

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.layer_output(frames, self.n_layers)

    def truncated(self, layers: int) -> "FrozenEncoder":
        """A copy holding only the first `layers` blocks."""
        self._check_layer(layers)
        lower = copy.copy(self)
        lower._modules = dict(self._modules)
        lower.blocks = nn.ModuleList(list(self.blocks[:layers]))
        return lower


def _as_tensor(frames: ArrayLike) -> torch.Tensor:
    if isinstance(frames, np.ndarray):
        frames = torch.from_numpy(np.ascontiguousarray(frames, dtype=np.float32))
    return frames.float()


@torch.no_grad()
def encode(enc: FrozenEncoder, frames: ArrayLike, layer: int) -> np.ndarray:
    """FeatureSequence (T x D, or N x T x D for a batch) after `layer` encoder layers."""
    return enc.layer_output(_as_tensor(frames), layer).numpy()


@torch.no_grad()
def encode_all_layers(enc: FrozenEncoder, frames: ArrayLike) -> List[np.ndarray]:
    return [h.numpy() for h in enc.all_layers(_as_tensor(frames))]


def pad_or_truncate(frames: np.ndarray, target_T: int) -> np.ndarray:
    """Zero rows appended up to `target_T`, or the tail dropped."""
    if target_T < 1:
        raise ValueError(f"target_T must be >= 1, got {target_T}")
    T = frames.shape[0]
    if T == target_T:
        return frames
    if T > target_T:
        return frames[:target_T]
    pad = np.zeros((target_T - T,) + frames.shape[1:], dtype=frames.dtype)
    return np.concatenate([frames, pad], axis=0)
