"""Univariate linear regression by gradient descent, with a closed-form check.

The objective is the sum of squared residuals
``J(a, b) = sum_i (a * x_i + b - y_i) ** 2``; ``mse_mean`` is the
per-sample variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PUBLISHED_SLOPE = 0.998
PUBLISHED_INTERCEPT = -15.101
DIVERGENCE_LIMIT = 1e12


class DivergenceError(ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"gradient descent diverged at epoch {epoch} (J={loss:.6g})")
        self.epoch = epoch
        self.loss = loss


class DegenerateDataError(ValueError):
    """Data cannot identify a line (too few points or zero x variance)."""


@dataclass(frozen=True)
class DataPoint:
    x: float
    y: float


@dataclass(frozen=True)
class LinearModel:
    a: float
    b: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"non-finite coefficients: a={self.a}, b={self.b}")


PUBLISHED_COUNT_MODEL = LinearModel(PUBLISHED_SLOPE, PUBLISHED_INTERCEPT)


@dataclass(frozen=True)
class GdConfig:
    learning_rate: float = 0.01
    epochs: int = 50_000
    init_a: float = 0.0
    init_b: float = 0.0
    standardize: bool = True

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass(frozen=True)
class YieldModel:
    count_correction: LinearModel
    mean_fruit_weight: float

    def __post_init__(self) -> None:
        if not self.mean_fruit_weight > 0:
            raise ValueError("mean_fruit_weight must be positive")


@dataclass
class FitResult:
    model: LinearModel
    history: list[float] = field(default_factory=list)


def predict(m: LinearModel, x: float) -> float:
    return m.a * x + m.b


def _arrays(data: Sequence[DataPoint]) -> tuple[np.ndarray, np.ndarray]:
    if len(data) == 0:
        raise DegenerateDataError("data must be non-empty")
    x = np.array([p.x for p in data], dtype=float)
    y = np.array([p.y for p in data], dtype=float)
    return x, y


def mse(m: LinearModel, data: Sequence[DataPoint]) -> float:
    """Sum of squared residuals over ``data``."""
    x, y = _arrays(data)
    r = m.a * x + m.b - y
    return float(np.dot(r, r))


def mse_mean(m: LinearModel, data: Sequence[DataPoint]) -> float:
    return mse(m, data) / len(data)


def gradient(m: LinearModel, data: Sequence[DataPoint]) -> tuple[float, float]:
    """Exact partial derivatives (dJ/da, dJ/db) of the summed squared error."""
    x, y = _arrays(data)
    r = m.a * x + m.b - y
    return float(2.0 * np.dot(r, x)), float(2.0 * r.sum())


def fit_ols(data: Sequence[DataPoint]) -> LinearModel:
    """Closed-form least-squares line: a = cov(x, y) / var(x)."""
    x, y = _arrays(data)
    if len(x) < 2:
        raise DegenerateDataError("need at least two points")
    mx, my = x.mean(), y.mean()
    dx = x - mx
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise DegenerateDataError("zero variance in x")
    a = float(np.dot(dx, y - my)) / sxx
    return LinearModel(a, float(my - a * mx))


def _descend(
    x: np.ndarray, y: np.ndarray, a: float, b: float, lr: float, epochs: int
) -> tuple[float, float, list[float]]:
    r = a * x + b - y
    history = [float(np.dot(r, r))]
    for epoch in range(1, epochs + 1):
        grad_a = 2.0 * float(np.dot(r, x))
        grad_b = 2.0 * float(r.sum())
        a, b = a - lr * grad_a, b - lr * grad_b
        r = a * x + b - y
        loss = float(np.dot(r, r))
        if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            raise DivergenceError(epoch, loss)
        history.append(loss)
    return a, b, history


def fit_gd(data: Sequence[DataPoint], cfg: GdConfig = GdConfig()) -> FitResult:
    """Fit ``y = a x + b`` by full-batch gradient descent on the summed squared error.

    With ``cfg.standardize`` (the default) x and y are shifted to zero mean and
    scaled to unit variance before descending; coefficients are mapped back to
    the original coordinates, including ``init_a``/``init_b`` on the way in.
    The history holds J before the first step and after every epoch, always in
    the coordinates the descent ran in (``epochs + 1`` entries).

    Raises:
        DivergenceError: if J exceeds 1e12 or becomes non-finite.
    """
    x, y = _arrays(data)
    if not cfg.standardize:
        a, b, history = _descend(x, y, cfg.init_a, cfg.init_b, cfg.learning_rate, cfg.epochs)
        return FitResult(LinearModel(a, b), history)

    mx, my = float(x.mean()), float(y.mean())
    sx, sy = float(x.std()), float(y.std())
    if sx == 0.0:
        raise DegenerateDataError("zero variance in x")
    if sy == 0.0:
        sy = 1.0
    xs, ys = (x - mx) / sx, (y - my) / sy
    # y = a x + b  <=>  ys = (a sx / sy) xs + (a mx + b - my) / sy
    a0 = cfg.init_a * sx / sy
    b0 = (cfg.init_a * mx + cfg.init_b - my) / sy
    a_s, b_s, history = _descend(xs, ys, a0, b0, cfg.learning_rate, cfg.epochs)
    if cfg.epochs == 0:
        return FitResult(LinearModel(cfg.init_a, cfg.init_b), history)
    a = a_s * sy / sx
    b = my + sy * b_s - a * mx
    return FitResult(LinearModel(a, b), history)


def estimate_yield(detected_count: float, ym: YieldModel) -> tuple[float, float]:
    """Corrected fruit count (clamped at 0) and yield mass for one tree."""
    if detected_count < 0:
        raise ValueError("detected_count must be non-negative")
    corrected = max(0.0, predict(ym.count_correction, detected_count))
    return corrected, corrected * ym.mean_fruit_weight


def points(pairs: Iterable[tuple[float, float]]) -> list[DataPoint]:
    return [DataPoint(float(x), float(y)) for x, y in pairs]
