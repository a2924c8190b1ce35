# src/quantize/tokens.py

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from utils.artifacts import read_token_file, write_token_file


@dataclass(frozen=True)
class TokenSequence:
    """L_layers x T codebook indices plus the size of each layer's codebook."""
    indices: np.ndarray
    codebook_sizes: Tuple[int, ...]

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        if indices.ndim != 2 or indices.shape[0] < 1:
            raise ValueError(f"token indices must be L x T with L >= 1, got shape {indices.shape}")
        sizes = tuple(int(k) for k in self.codebook_sizes)
        if len(sizes) != indices.shape[0]:
            raise ValueError(f"{indices.shape[0]} token layers but {len(sizes)} codebook sizes")
        for layer, (row, K) in enumerate(zip(indices, sizes)):
            if row.size and (row.min() < 0 or row.max() >= K):
                raise ValueError(f"layer {layer}: token index outside [0, {K})")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "codebook_sizes", sizes)

    @property
    def n_layers(self) -> int:
        return int(self.indices.shape[0])

    @property
    def T(self) -> int:
        return int(self.indices.shape[1])

    def save(self, path) -> None:
        write_token_file(path, self.indices, self.codebook_sizes)

    @classmethod
    def load(cls, path) -> "TokenSequence":
        indices, sizes = read_token_file(path)
        return cls(indices, tuple(sizes))
