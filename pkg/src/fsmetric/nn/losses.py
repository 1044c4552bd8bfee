"""Objective functions returning (loss, gradient) pairs."""

import numpy as np

from ..errors import ShapeError


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy over a batch.

    Returns ``(loss, dlogits)``; the loss is accumulated in float64 whatever
    the logits' precision.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ShapeError(f"cross_entropy expects a non-empty (batch, C) array, got {logits.shape}")
    n, c = logits.shape
    if c < 2:
        raise ShapeError("cross_entropy needs at least 2 categories")
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"label index out of range [0, {c})")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_p = z[np.arange(n), labels] - log_norm
    loss = float(-log_p.mean())
    probs = np.exp(z - log_norm[:, None])
    probs[np.arange(n), labels] -= 1.0
    return loss, (probs / n).astype(logits.dtype)


def contrastive_loss(h1, h2, same, margin=1.0):
    """Pair loss: d^2 for same-category pairs, max(0, margin - d)^2 otherwise.

    ``h1``/``h2`` are (batch, D) embeddings (a single pair may be passed as
    1-D vectors); ``same`` is a boolean per pair.  Returns
    ``(loss, dh1, dh2)`` with the loss averaged over pairs.
    """
    h1 = np.asarray(h1)
    h2 = np.asarray(h2)
    if h1.shape != h2.shape:
        raise ShapeError(f"contrastive_loss: shape mismatch {h1.shape} vs {h2.shape}")
    if margin <= 0:
        raise ValueError("margin must be positive")
    single = h1.ndim == 1
    a = np.atleast_2d(h1).astype(np.float64)
    b = np.atleast_2d(h2).astype(np.float64)
    y = np.atleast_1d(np.asarray(same, dtype=bool))
    if y.shape[0] != a.shape[0]:
        raise ShapeError(f"{a.shape[0]} pairs but {y.shape[0]} same-flags")
    n = a.shape[0]
    diff = a - b
    d = np.sqrt((diff ** 2).sum(axis=1))
    hinge = np.maximum(0.0, margin - d)
    per_pair = np.where(y, d ** 2, hinge ** 2)
    loss = float(per_pair.mean())
    safe_d = np.where(d > 0, d, 1.0)
    coef = np.where(y, 2.0, np.where(d > 0, -2.0 * hinge / safe_d, 0.0)) / n
    g = coef[:, None] * diff
    if single:
        g = g[0]
    return loss, g.astype(h1.dtype), (-g).astype(h2.dtype)
