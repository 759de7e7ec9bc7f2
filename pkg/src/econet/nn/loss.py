"""Scribbles-balanced softmax cross-entropy for two-class logits."""
from __future__ import annotations

import numpy as np

PROB_CLAMP = 1e-7


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def weighted_softmax_ce(logits: np.ndarray, labels: np.ndarray,
                        w_f: float, w_b: float) -> tuple[float, np.ndarray]:
    """Class-weighted cross-entropy summed over the batch.

    loss = -sum_i [ w_f * y_i * log p_i + w_b * (1 - y_i) * log(1 - p_i) ]
    with p_i the softmax foreground probability of sample i. Probabilities
    are clamped to [1e-7, 1 - 1e-7] before the log so confident logits cannot
    produce infinities; the returned gradient is the exact softmax gradient
    w_i * (p - onehot(y)) with respect to the logits.

    Returns (loss, dloss/dlogits). Logit column order is (background,
    foreground).
    """
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ValueError(f"expected (N, 2) logits, got {logits.shape}")
    w_f, w_b = float(w_f), float(w_b)
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ValueError("labels must be one class id per sample")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 (background) or 1 (foreground)")
    p = softmax(logits, axis=1)
    pf = np.clip(p[:, 1], PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = labels.astype(logits.dtype)
    w = np.where(labels == 1, w_f, w_b).astype(logits.dtype)
    loss = -float(np.sum(w * (y * np.log(pf) + (1.0 - y) * np.log(1.0 - pf))))
    onehot = np.zeros_like(p)
    onehot[np.arange(len(labels)), labels] = 1.0
    grad = w[:, None] * (p - onehot)
    return loss, grad.astype(logits.dtype, copy=False)
