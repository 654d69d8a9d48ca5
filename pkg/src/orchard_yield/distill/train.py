"""Seeded teacher -> student distillation on toy classifiers.

The student minimises, by full-batch gradient descent,

    lambda_hard * mean CE(softmax(z_s), y)
        + lambda_soft * T**2 * mean KL(softmax(z_t / T) || softmax(z_s / T))

where z_s and z_t are student and teacher logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .softmax import kl_divergence, temperature_log_softmax, temperature_softmax
from .toynet import ToyNet, net_backward, net_forward


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 20.0
    lambda_hard: float = 0.5
    lambda_soft: float = 0.5
    learning_rate: float = 0.1
    epochs: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if self.lambda_hard < 0 or self.lambda_soft < 0:
            raise ConfigError("loss weights must be non-negative")
        if not self.lambda_hard + self.lambda_soft > 0:
            raise ConfigError("lambda_hard + lambda_soft must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")


@dataclass
class Dataset:
    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,) integer labels

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError("x must be (n, d) and y must be (n,)")

    def __len__(self) -> int:
        return self.x.shape[0]


@dataclass
class History:
    total: list[float] = field(default_factory=list)
    hard: list[float] = field(default_factory=list)
    soft: list[float] = field(default_factory=list)

    def append(self, total: float, hard: float, soft: float) -> None:
        self.total.append(total)
        self.hard.append(hard)
        self.soft.append(soft)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    student: ToyNet
    history: History


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    return float(-(targets * temperature_log_softmax(logits)).sum(axis=1).mean())


def soft_loss(student_logits: np.ndarray, teacher_logits: np.ndarray, temperature: float) -> float:
    """T**2 times the mean softened KL from teacher to student."""
    kl = kl_divergence(teacher_logits, student_logits, temperature)
    return float(temperature * temperature * kl.mean())


def hard_logit_grad(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return (temperature_softmax(logits) - targets) / logits.shape[0]


def soft_logit_grad(student_logits: np.ndarray, teacher_logits: np.ndarray, temperature: float) -> np.ndarray:
    q_s = temperature_softmax(student_logits, temperature)
    q_t = temperature_softmax(teacher_logits, temperature)
    return temperature * (q_s - q_t) / student_logits.shape[0]


def distill_objective(
    student: ToyNet, teacher_logits: np.ndarray, data: Dataset, cfg: DistillConfig
) -> tuple[float, float, float, np.ndarray]:
    """(total, hard, soft, parameter gradient) of the distillation objective."""
    z = net_forward(student, data.x)
    targets = one_hot(data.y, student.output_dim)
    hard = cross_entropy(z, targets)
    soft = soft_loss(z, teacher_logits, cfg.temperature)
    dz = cfg.lambda_hard * hard_logit_grad(z, targets)
    if cfg.lambda_soft:
        dz = dz + cfg.lambda_soft * soft_logit_grad(z, teacher_logits, cfg.temperature)
    total = cfg.lambda_hard * hard + cfg.lambda_soft * soft
    return total, hard, soft, net_backward(student, data.x, dz)


def _validate(teacher: ToyNet, student: ToyNet, data: Dataset) -> None:
    if len(data) == 0:
        raise ValueError("training data is empty")
    if teacher.output_dim != student.output_dim:
        raise ValueError("teacher and student output dimensions differ")
    if data.x.shape[1] != student.input_dim or data.x.shape[1] != teacher.input_dim:
        raise ValueError("input dimension does not match the networks")
    if data.y.min() < 0 or data.y.max() >= student.output_dim:
        raise ValueError("labels out of range for the output layer")


def train_student(teacher: ToyNet, student: ToyNet, data: Dataset, cfg: DistillConfig) -> TrainResult:
    """Distil ``teacher`` into a copy of ``student``.

    The history holds the losses before the first update and after each of the
    ``cfg.epochs`` updates. The input networks are not modified.
    """
    _validate(teacher, student, data)
    teacher_logits = net_forward(teacher, data.x)
    theta = student.get_params()
    net = student
    history = History()
    for _ in range(cfg.epochs):
        total, hard, soft, grad = distill_objective(net, teacher_logits, data, cfg)
        history.append(total, hard, soft)
        theta = theta - cfg.learning_rate * grad
        net = net.with_params(theta)
    total, hard, soft, _ = distill_objective(net, teacher_logits, data, cfg)
    history.append(total, hard, soft)
    return TrainResult(net.copy(), history)


def train_supervised(
    net: ToyNet, data: Dataset, learning_rate: float, epochs: int, weight: float = 1.0
) -> TrainResult:
    """Plain gradient descent on ``weight * CE``; soft history entries are 0."""
    if len(data) == 0:
        raise ValueError("training data is empty")
    targets = one_hot(data.y, net.output_dim)
    theta = net.get_params()
    history = History()
    for step in range(epochs + 1):
        z = net_forward(net, data.x)
        hard = cross_entropy(z, targets)
        history.append(weight * hard, hard, 0.0)
        if step == epochs:
            break
        grad = net_backward(net, data.x, weight * hard_logit_grad(z, targets))
        theta = theta - learning_rate * grad
        net = net.with_params(theta)
    return TrainResult(net.copy(), history)


def make_blobs(rng: np.random.Generator, n_per_class: int = 100, spread: float = 1.0) -> Dataset:
    """Two overlapping 2-D Gaussian blobs centred at (-1, -1) and (1, 1)."""
    centres = np.array([[-1.0, -1.0], [1.0, 1.0]])
    xs, ys = [], []
    for label, c in enumerate(centres):
        xs.append(c + spread * rng.standard_normal((n_per_class, 2)))
        ys.append(np.full(n_per_class, label))
    return Dataset(np.vstack(xs), np.concatenate(ys))


@dataclass(frozen=True)
class DemoConfig:
    distill: DistillConfig = field(default_factory=DistillConfig)
    teacher_hidden: tuple[int, ...] = (32, 32)
    student_hidden: tuple[int, ...] = (4,)
    samples_per_class: int = 100
    teacher_epochs: int = 500
    teacher_learning_rate: float = 0.5


@dataclass
class DemoResult:
    config: DemoConfig
    teacher: ToyNet
    teacher_history: History
    distilled: TrainResult
    baseline: TrainResult
    teacher_accuracy: float
    distilled_accuracy: float
    baseline_accuracy: float


def accuracy(net: ToyNet, data: Dataset) -> float:
    return float((net_forward(net, data.x).argmax(axis=1) == data.y).mean())


def run_demo(cfg: Optional[DemoConfig] = None) -> DemoResult:
    """Seeded teacher pre-training, then distilled vs. plain student training.

    A single generator seeded with ``cfg.distill.seed`` draws, in order, the
    data, the teacher weights and the student weights. The baseline student
    starts from the same weights and trains on ``lambda_hard * CE`` alone.
    """
    cfg = cfg or DemoConfig()
    d = cfg.distill
    rng = np.random.default_rng(d.seed)
    data = make_blobs(rng, cfg.samples_per_class)
    n_classes = 2
    teacher0 = ToyNet.initialize((2, *cfg.teacher_hidden, n_classes), rng, d.seed)
    student0 = ToyNet.initialize((2, *cfg.student_hidden, n_classes), rng, d.seed)
    teacher_run = train_supervised(teacher0, data, cfg.teacher_learning_rate, cfg.teacher_epochs)
    teacher = teacher_run.student
    distilled = train_student(teacher, student0, data, d)
    baseline_weight = d.lambda_hard if d.lambda_hard > 0 else 1.0
    baseline = train_supervised(student0, data, d.learning_rate, d.epochs, weight=baseline_weight)
    return DemoResult(
        config=cfg,
        teacher=teacher,
        teacher_history=teacher_run.history,
        distilled=distilled,
        baseline=baseline,
        teacher_accuracy=accuracy(teacher, data),
        distilled_accuracy=accuracy(distilled.student, data),
        baseline_accuracy=accuracy(baseline.student, data),
    )
