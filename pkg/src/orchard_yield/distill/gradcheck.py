from __future__ import annotations

from typing import Callable

import numpy as np

LossAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


def numeric_gradient(loss: Callable[[np.ndarray], float], params, epsilon: float = 1e-6) -> np.ndarray:
    """Central finite differences, one coordinate at a time."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    p = np.array(params, dtype=float)
    g = np.empty_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + epsilon
        up = loss(p)
        p[i] = orig - epsilon
        down = loss(p)
        p[i] = orig
        g[i] = (up - down) / (2.0 * epsilon)
    return g


def gradcheck(loss_at: LossAndGrad, params, epsilon: float = 1e-6) -> float:
    """Max relative error between the analytic and the finite-difference gradient.

    ``loss_at(p)`` returns ``(loss, analytic_grad)``. Per coordinate the error is
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    p = np.array(params, dtype=float)
    _, analytic = loss_at(p.copy())
    numeric = numeric_gradient(lambda q: loss_at(q)[0], p, epsilon)
    analytic = np.asarray(analytic, dtype=float).reshape(p.shape)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    if p.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / denom))
