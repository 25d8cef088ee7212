"""Fusing cohort models into one student through weighted-logit distillation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import LabelDistribution, UnlabeledDataset
from .errors import InvalidInputError
from .nn import MlpModel, OptimizerState, adam_step, backward_kd, forward


def compute_weights(
    distributions: Sequence[LabelDistribution], per_class: bool = True
) -> np.ndarray:
    """Teacher weights, shape (teachers, classes); every column sums to one.

    Per class, a teacher's weight is its share of that class's samples; classes
    nobody holds are split evenly. With ``per_class=False`` each teacher gets
    its share of all samples, repeated across classes.
    """
    if not distributions:
        raise InvalidInputError("need at least one label distribution")
    sizes = {d.class_count for d in distributions}
    if len(sizes) != 1:
        raise InvalidInputError(f"mismatched class counts: {sorted(sizes)}")
    counts = np.array([d.counts for d in distributions], dtype=np.float64)
    n, classes = counts.shape
    if not per_class:
        total = counts.sum()
        shares = counts.sum(axis=1) / total if total > 0 else np.full(n, 1.0 / n)
        return np.repeat(shares[:, None], classes, axis=1)
    totals = counts.sum(axis=0)
    weights = np.full((n, classes), 1.0 / n)
    held = totals > 0
    weights[:, held] = counts[:, held] / totals[held]
    return weights


def teacher_logits(teachers: Sequence[MlpModel], public: UnlabeledDataset) -> list[np.ndarray]:
    if not teachers:
        raise InvalidInputError("need at least one teacher")
    classes = {t.num_classes for t in teachers}
    if len(classes) != 1:
        raise InvalidInputError(f"teachers disagree on class count: {sorted(classes)}")
    return [forward(t, public.features) for t in teachers]


def combine_logits(logits: Sequence[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """z~[:, c] = sum_i weights[i, c] * logits[i][:, c], accumulated in teacher order."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != len(logits):
        raise InvalidInputError(
            f"weights must have one row per teacher ({len(logits)}), got shape {weights.shape}"
        )
    if any(z.shape[1] != weights.shape[1] for z in logits):
        raise InvalidInputError("weight columns do not match the class count")
    out = logits[0] * weights[0]
    for z, w in zip(logits[1:], weights[1:]):
        out = out + z * w
    return out


def build_soft_targets(
    teachers: Sequence[MlpModel], public: UnlabeledDataset, weights: np.ndarray
) -> np.ndarray:
    return combine_logits(teacher_logits(teachers, public), weights)


@dataclass(frozen=True)
class DistillSchedule:
    epochs: int = 50
    batch_size: int = 512
    lr: float = 0.001


@dataclass
class DistillResult:
    student: MlpModel
    initial_loss: float
    final_loss: float
    epoch_losses: list[float] = field(default_factory=list)
    steps: int = 0
    batch_clamped: bool = False


def distill_loss(model: MlpModel, public: UnlabeledDataset, targets: np.ndarray) -> float:
    """Mean L1 distance between the model's logits and the targets over the whole set."""
    return float(np.abs(forward(model, public.features) - targets).sum(axis=1).mean())


def train_student(
    student: MlpModel,
    public: UnlabeledDataset,
    targets: np.ndarray,
    schedule: DistillSchedule = DistillSchedule(),
    seed=None,
) -> DistillResult:
    """Mini-batch Adam on the L1 logit loss. ``student`` is copied, not modified.

    ``epoch_losses`` holds the full-set loss after every epoch.
    """
    targets = np.asarray(targets, dtype=np.float64)
    size = len(public)
    if size < 1:
        raise InvalidInputError("public set is empty")
    if targets.shape != (size, student.num_classes):
        raise InvalidInputError(
            f"targets must be {(size, student.num_classes)}, got {targets.shape}"
        )
    batch_size = schedule.batch_size
    clamped = batch_size > size
    if clamped:
        warnings.warn(f"distillation batch {batch_size} clamped to public set size {size}")
        batch_size = size

    model = student.copy()
    state = OptimizerState.adam(model, lr=schedule.lr)
    rng = np.random.default_rng(seed)
    initial = distill_loss(model, public, targets)
    history = []
    for _ in range(schedule.epochs):
        perm = rng.permutation(size)
        for start in range(0, size, batch_size):
            idx = perm[start:start + batch_size]
            grads, _ = backward_kd(model, public.features[idx], targets[idx])
            adam_step(model, state, grads)
        history.append(distill_loss(model, public, targets))
    final = history[-1] if history else initial
    return DistillResult(model, initial, final, history, state.step, clamped)
