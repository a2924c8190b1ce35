# src/audio_tokenizers/bottleneck.py
"""
The encoder -> quantizer -> decoder module shared by the representation codec and the
supervised tokenizer. Encoder and decoder are residual conv stacks that keep both the
sequence length and the width.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
from torch import nn

from quantize import Codebook, RVQOutput, codebook_stats, ema_update, nearest_code, rvq_forward
from substrate import ResidualConvBlock

logger = logging.getLogger(__name__)

N_CONV_BLOCKS = 3


@dataclass
class QuantizerSpec:
    K: int = 64
    n_layers: int = 1
    decay: float = 0.99
    eps: float = 1e-5
    dead_threshold: float = 1e-3

    def validate(self) -> None:
        if self.n_layers not in (1, 2):
            raise ValueError(f"quantizer supports 1 or 2 codebooks, got {self.n_layers}")
        if self.K < 1:
            raise ValueError(f"codebook size must be >= 1, got {self.K}")


class VQBottleneck(nn.Module):
    def __init__(self, dim: int, spec: QuantizerSpec, generator: torch.Generator):
        super().__init__()
        spec.validate()
        self.dim = dim
        self.spec = spec
        self.encoder = nn.Sequential(*[ResidualConvBlock(dim, generator) for _ in range(N_CONV_BLOCKS)])
        self.codebooks = nn.ModuleList(
            Codebook(spec.K, dim, decay=spec.decay, eps=spec.eps, dead_threshold=spec.dead_threshold,
                     generator=generator)
            for _ in range(spec.n_layers)
        )
        self.decoder = nn.Sequential(*[ResidualConvBlock(dim, generator) for _ in range(N_CONV_BLOCKS)])

    @property
    def n_layers(self) -> int:
        return len(self.codebooks)

    @property
    def K(self) -> int:
        return self.spec.K

    def _check_width(self, x: torch.Tensor) -> None:
        if x.shape[-1] != self.dim:
            raise ValueError(f"input of shape {tuple(x.shape)} does not match quantizer width {self.dim}")

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        self._check_width(x)
        return self.encoder(x)

    def quantize(self, z: torch.Tensor) -> RVQOutput:
        return rvq_forward(list(self.codebooks), z)

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, RVQOutput, torch.Tensor]:
        """Returns (decoded, quantizer output, pre-quantization encoding)."""
        z = self.encode(x)
        out = self.quantize(z)
        return self.decoder(out.quantized), out, z

    @torch.no_grad()
    def init_codebooks(self, z: torch.Tensor, generator: Optional[torch.Generator] = None) -> None:
        """Seeds stage 1 from encoder outputs and each later stage from the residuals left before it."""
        residual = z.detach().reshape(-1, self.dim)
        for cb in self.codebooks:
            cb.init_from(residual, generator)
            idx, _ = nearest_code(cb.vectors, residual)
            residual = residual - cb.vectors[idx]

    @torch.no_grad()
    def update_codebooks(self, out: RVQOutput, generator: Optional[torch.Generator] = None) -> int:
        reseeded = 0
        for cb, stage_input, indices in zip(self.codebooks, out.stage_inputs, out.indices):
            reseeded += ema_update(cb, stage_input, indices, generator)
        return reseeded

    @torch.no_grad()
    def indices(self, x: torch.Tensor) -> torch.Tensor:
        """L x ... token indices for `x`; no decoder pass."""
        return self.quantize(self.encode(x)).indices

    def usage(self, indices: torch.Tensor) -> List[dict]:
        """Per-layer utilization and perplexity of a batch of indices."""
        stats = []
        for layer in range(indices.shape[0]):
            s = codebook_stats(indices[layer], self.K)
            stats.append({"utilization": s.utilization, "perplexity": s.perplexity})
        return stats


def as_float_tensor(features, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    if isinstance(features, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(features)).to(dtype)
    return features.to(dtype)
