# src/metrics/tagging.py

import numpy as np


def macro_f1(probs, labels, threshold: float = 0.5) -> float:
    """
    Mean per-class F1 of thresholded predictions. A class with no positive prediction
    and no positive label counts as F1 = 1.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape != labels.shape:
        raise ValueError(f"macro_f1: prediction shape {probs.shape} does not match labels {labels.shape}")
    if probs.ndim == 1:
        probs, labels = probs[:, None], labels[:, None]
    pred = probs >= threshold
    truth = labels.astype(bool)
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    denom = 2 * tp + fp + fn
    f1 = np.where(denom == 0, 1.0, 2 * tp / np.maximum(denom, 1))
    return float(f1.mean())
