# src/experiments/probe.py

import logging

import numpy as np
import torch

from audio_tokenizers import bce_loss
from metrics import macro_f1
from substrate import Linear, adamw_step, build_adamw, check_finite, make_generator

logger = logging.getLogger(__name__)


def pool_features(features: np.ndarray) -> np.ndarray:
    """N x T x D to N x D by averaging over time."""
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 3:
        raise ValueError(f"expected N x T x D features, got shape {features.shape}")
    return features.mean(axis=1)


def linear_probe_f1(train_x: np.ndarray, train_y: np.ndarray, test_x: np.ndarray, test_y: np.ndarray,
                    epochs: int = 200, lr: float = 1e-2, seed: int = 0) -> float:
    """
    Fits a sigmoid tagging head on time-pooled features with the summed binary cross-entropy
    (full batch) and returns macro-F1 on the test clips.
    """
    if epochs < 1:
        raise ValueError(f"linear probe needs at least one epoch, got {epochs}")
    X, Xt = pool_features(train_x), pool_features(test_x)
    if len(X) != len(train_y) or len(Xt) != len(test_y):
        raise ValueError("linear probe: feature and label counts differ")
    # standardise with training statistics so one learning rate suits every token source
    mean, std = X.mean(axis=0), X.std(axis=0) + 1e-6
    X, Xt = (X - mean) / std, (Xt - mean) / std

    head = Linear(X.shape[1], train_y.shape[1], make_generator(seed))
    optimizer = build_adamw(head, lr=lr)
    x, y = torch.from_numpy(X), torch.from_numpy(np.asarray(train_y, dtype=np.float32))
    for epoch in range(epochs):
        loss = bce_loss(torch.sigmoid(head(x)), y) / len(x)
        check_finite("linear-probe", float(loss), epoch)
        loss.backward()
        adamw_step(optimizer)

    with torch.no_grad():
        probs = torch.sigmoid(head(torch.from_numpy(Xt))).numpy()
    f1 = macro_f1(probs, test_y)
    logger.debug(f"Linear probe: final train loss {float(loss):.4f}, test macro-F1 {f1:.4f}")
    return f1
