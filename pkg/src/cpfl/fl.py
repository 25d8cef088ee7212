"""Cohort-level federated learning pieces: who trains, how, and when to stop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import seeding
from .data import LabeledDataset
from .errors import InvalidInputError
from .nn import MlpModel, OptimizerState, backward_ce, sgd_step


@dataclass
class CohortAssignment:
    num_cohorts: int
    membership: dict[int, int]

    def members(self, cohort: int) -> list[int]:
        return sorted(k for k, c in self.membership.items() if c == cohort)

    def cohorts(self) -> list[list[int]]:
        groups: list[list[int]] = [[] for _ in range(self.num_cohorts)]
        for client in sorted(self.membership):
            groups[self.membership[client]].append(client)
        return groups


def partition_cohorts(num_clients: int, num_cohorts: int, seed) -> CohortAssignment:
    """Shuffle clients and cut them into near-equal cohorts (first groups get the extras)."""
    if not 1 <= num_cohorts <= num_clients:
        raise InvalidInputError(
            f"need 1 <= num_cohorts <= num_clients, got n={num_cohorts}, M={num_clients}"
        )
    order = np.random.default_rng(seed).permutation(num_clients)
    membership = {}
    for cohort, group in enumerate(np.array_split(order, num_cohorts)):
        for client in group:
            membership[int(client)] = cohort
    return CohortAssignment(num_cohorts, membership)


def participant_count(cohort_size: int, rate: float) -> int:
    return max(1, min(cohort_size, math.floor(rate * cohort_size + 0.5)))


def sample_participants(
    cohort_clients: Sequence[int], rate: float, round_index: int, seed: int, cohort_index: int = 0
) -> list[int]:
    """Clients taking part in one round, in ascending client order.

    A fresh draw per ``(seed, cohort_index, round_index)``; ``rate == 1`` returns
    the whole cohort without consuming randomness.
    """
    if not cohort_clients:
        raise InvalidInputError("cohort has no clients")
    if not 0 < rate <= 1:
        raise InvalidInputError(f"participation rate must lie in (0, 1], got {rate}")
    clients = sorted(cohort_clients)
    k = participant_count(len(clients), rate)
    if k == len(clients):
        return clients
    gen = seeding.rng(seed, "participants", cohort_index, round_index)
    picked = gen.choice(len(clients), size=k, replace=False)
    return [clients[i] for i in sorted(picked)]


@dataclass(frozen=True)
class LocalWork:
    """Either ``epochs`` full passes or exactly ``steps`` mini-batches per round."""

    epochs: int | None = 1
    steps: int | None = None

    def __post_init__(self) -> None:
        if (self.epochs is None) == (self.steps is None):
            raise InvalidInputError("set exactly one of epochs or steps")
        value = self.epochs if self.steps is None else self.steps
        if value < 1:
            raise InvalidInputError("local work must be >= 1")


@dataclass(frozen=True)
class SgdConfig:
    lr: float = 0.002
    momentum: float = 0.9


@dataclass
class LocalResult:
    model: MlpModel
    train_loss: float
    batches: int


def _batch_plan(n: int, work: LocalWork, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    if work.steps is None:
        plan = []
        for _ in range(work.epochs):
            perm = rng.permutation(n)
            plan.extend(perm[i:i + batch_size] for i in range(0, n, batch_size))
        return plan
    plan = []
    perm, pos = rng.permutation(n), 0
    for _ in range(work.steps):
        if pos >= n:
            perm, pos = rng.permutation(n), 0
        plan.append(perm[pos:pos + batch_size])
        pos += batch_size
    return plan


def local_update(
    model: MlpModel,
    train_set: LabeledDataset,
    work: LocalWork,
    batch_size: int,
    optimizer: SgdConfig,
    rng: np.random.Generator,
) -> LocalResult | None:
    """Train a copy of ``model`` on one client's data with fresh momentum.

    Returns ``None`` for a client with no training data.
    """
    n = len(train_set)
    if n == 0:
        return None
    if batch_size < 1:
        raise InvalidInputError("batch_size must be >= 1")
    local = model.copy()
    state = OptimizerState.sgd(local, optimizer.lr, optimizer.momentum)
    losses = []
    plan = _batch_plan(n, work, batch_size, rng)
    for idx in plan:
        grads, loss = backward_ce(local, train_set.features[idx], train_set.labels[idx])
        sgd_step(local, state, grads)
        losses.append(loss)
    return LocalResult(local, float(np.mean(losses)), len(plan))


def fedavg_aggregate(updates: Sequence[tuple[Sequence[np.ndarray], float]]) -> list[np.ndarray]:
    """Weighted mean of parameter lists; weights are normalized to sum to one."""
    if not updates:
        raise InvalidInputError("no updates to aggregate")
    weights = np.array([float(w) for _, w in updates])
    if np.any(~(weights > 0)):
        raise InvalidInputError("aggregation weights must be > 0")
    shapes = [p.shape for p in updates[0][0]]
    for params, _ in updates:
        if [p.shape for p in params] != shapes:
            raise InvalidInputError("parameter shapes differ between updates")
    weights = weights / weights.sum()
    out = [weights[0] * p for p in updates[0][0]]
    for (params, _), w in zip(updates[1:], weights[1:]):
        for acc, p in zip(out, params):
            acc += w * p
    return out


@dataclass
class StoppingState:
    """Patience on the moving average of a per-round loss.

    The moving average is kept as an exact fraction, so equal raw losses give
    exactly equal smoothed values and never count as an improvement.
    """

    window: int = 20
    patience: int = 50
    history: list[float] = field(default_factory=list)
    best: Fraction | None = None
    rounds_since_improvement: int = 0

    def __post_init__(self) -> None:
        if self.window < 1 or self.patience < 1:
            raise InvalidInputError("window and patience must be >= 1")

    def smoothed(self) -> float:
        return float(self._smoothed_exact())

    def _smoothed_exact(self) -> Fraction:
        tail = self.history[-self.window:]
        return sum((Fraction(v) for v in tail), Fraction(0)) / len(tail)

    @property
    def best_smoothed(self) -> float:
        return math.inf if self.best is None else float(self.best)

    @property
    def stopped(self) -> bool:
        return self.rounds_since_improvement >= self.patience


def smooth_and_check(state: StoppingState, new_val_loss: float) -> tuple[StoppingState, bool]:
    if not math.isfinite(new_val_loss):
        raise InvalidInputError(f"loss must be finite, got {new_val_loss}")
    state.history.append(float(new_val_loss))
    value = state._smoothed_exact()
    if state.best is None or value < state.best:
        state.best = value
        state.rounds_since_improvement = 0
    else:
        state.rounds_since_improvement += 1
    return state, state.stopped
