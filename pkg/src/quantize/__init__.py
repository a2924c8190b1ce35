"""Quantization machinery: codebooks, VQ/RVQ with EMA updates, k-means, token files."""

from .codebook import (Codebook, CodebookStats, RVQOutput, VQOutput, codebook_stats, commitment_loss, detokenize,
                       ema_update, nearest_code, rvq_forward, squared_distances, straight_through, vq_forward)
from .kmeans import KMeansModel, kmeans_fit
from .tokens import TokenSequence

__all__ = [
    "Codebook", "CodebookStats", "KMeansModel", "RVQOutput", "TokenSequence", "VQOutput", "codebook_stats",
    "commitment_loss", "detokenize", "ema_update", "kmeans_fit", "nearest_code", "rvq_forward",
    "squared_distances", "straight_through", "vq_forward",
]
