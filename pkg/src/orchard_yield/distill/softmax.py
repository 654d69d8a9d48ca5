"""Temperature-scaled softmax and the divergences built on it.

All functions operate along the last axis, so a single logit vector and a
batch of shape ``(n, K)`` are handled the same way.
"""

from __future__ import annotations

import numpy as np


def _check_temperature(temperature: float) -> None:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")


def temperature_log_softmax(z, temperature: float = 1.0) -> np.ndarray:
    _check_temperature(temperature)
    s = np.asarray(z, dtype=float) / temperature
    s = s - s.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def temperature_softmax(z, temperature: float = 1.0) -> np.ndarray:
    """Softmax of ``z / temperature``, computed with max-subtraction.

    Raises:
        ValueError: if ``temperature`` is not positive.
    """
    _check_temperature(temperature)
    s = np.asarray(z, dtype=float) / temperature
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def kl_divergence(teacher_logits, student_logits, temperature: float = 1.0) -> np.ndarray:
    """KL(softmax_T(teacher) || softmax_T(student)) per row, clamped at 0."""
    log_t = temperature_log_softmax(teacher_logits, temperature)
    log_s = temperature_log_softmax(student_logits, temperature)
    kl = (np.exp(log_t) * (log_t - log_s)).sum(axis=-1)
    return np.maximum(kl, 0.0)


def entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    # Two branches keep exp() from overflowing on large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_with_logits(logits, targets) -> np.ndarray:
    """Elementwise binary cross-entropy of sigmoid(logits) against target probabilities."""
    o = np.asarray(logits, dtype=float)
    y = np.asarray(targets, dtype=float)
    return np.maximum(o, 0.0) - o * y + np.log1p(np.exp(-np.abs(o)))


def binary_kl_with_logits(teacher_logits, student_logits) -> np.ndarray:
    """KL between Bernoulli(sigmoid(teacher)) and Bernoulli(sigmoid(student)).

    Equal to the soft-label BCE minus the teacher's own entropy, so it has the
    same gradient in the student logits and vanishes when the two agree.
    """
    t = np.asarray(teacher_logits, dtype=float)
    p_t = sigmoid(t)
    kl = bce_with_logits(student_logits, p_t) - bce_with_logits(t, p_t)
    return np.maximum(kl, 0.0)
