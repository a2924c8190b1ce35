# src/quantize/kmeans.py

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch
from sklearn.cluster import kmeans_plusplus

from substrate.checkpoint import load_weights, save_weights
from .codebook import Codebook, nearest_code
from .tokens import TokenSequence

logger = logging.getLogger(__name__)


@dataclass
class KMeansModel:
    centroids: np.ndarray
    inertia_history: List[float] = field(default_factory=list)

    @property
    def K(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def D(self) -> int:
        return int(self.centroids.shape[1])

    def codebook(self) -> Codebook:
        return Codebook(self.K, self.D, vectors=torch.from_numpy(self.centroids.astype(np.float32)))

    def assign(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features)
        if features.shape[-1] != self.D:
            raise ValueError(f"features of width {features.shape[-1]} for a k-means model of width {self.D}")
        centroids = torch.from_numpy(self.centroids)
        idx, _ = nearest_code(centroids, torch.from_numpy(np.ascontiguousarray(features, dtype=self.centroids.dtype)))
        return idx.numpy()

    def tokenize(self, features: np.ndarray) -> TokenSequence:
        """T x D features to a single-layer token sequence."""
        return TokenSequence(self.assign(features)[None, :], (self.K,))

    def save(self, path) -> None:
        save_weights(path, {"centroids": self.centroids})

    @classmethod
    def load(cls, path) -> "KMeansModel":
        return cls(centroids=load_weights(path)["centroids"])


def _inertia(d2: torch.Tensor) -> float:
    return float(d2.sum())


def kmeans_fit(features: np.ndarray, K: int, max_iters: int = 100, seed: int = 0,
               sample_size: Optional[int] = None) -> KMeansModel:
    """
    Lloyd iterations from a seeded k-means++ start. Stops after `max_iters` updates or
    once assignments no longer change; the inertia history is non-increasing.
    Empty clusters keep their previous centroid.
    """
    X = np.asarray(features, dtype=np.float64).reshape(-1, np.asarray(features).shape[-1])
    if sample_size is not None and X.shape[0] > sample_size:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(X.shape[0], size=sample_size, replace=False))]
    N = X.shape[0]
    if N < K:
        raise ValueError(f"k-means needs at least K={K} points, got {N}")

    centroids, _ = kmeans_plusplus(X, n_clusters=K, random_state=seed)
    Xt = torch.from_numpy(X)
    labels, d2 = nearest_code(torch.from_numpy(centroids), Xt)
    history = [_inertia(d2)]

    for iteration in range(max_iters):
        counts = np.bincount(labels.numpy(), minlength=K)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels.numpy(), X)
        occupied = counts > 0
        centroids = centroids.copy()
        centroids[occupied] = sums[occupied] / counts[occupied, None]

        new_labels, d2 = nearest_code(torch.from_numpy(centroids), Xt)
        history.append(_inertia(d2))
        if torch.equal(new_labels, labels):
            logger.debug(f"k-means converged after {iteration + 1} iterations")
            break
        labels = new_labels

    logger.info(f"k-means K={K} on {N} points: inertia {history[0]:.4g} -> {history[-1]:.4g} "
                f"in {len(history) - 1} iterations")
    return KMeansModel(centroids=centroids, inertia_history=history)
