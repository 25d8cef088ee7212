"""Round-synchronous cohort sessions over simulated time, with resource accounting."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import seeding
from .data import LabelDistribution, LabeledDataset, aggregate_label_distributions, label_distribution
from .errors import InvalidInputError
from .fl import (
    CohortAssignment,
    LocalWork,
    SgdConfig,
    StoppingState,
    fedavg_aggregate,
    local_update,
    sample_participants,
    smooth_and_check,
)
from .nn import MlpModel, evaluate, init_model, model_bytes
from .traces import DeviceProfile, client_round_duration, compute_seconds


@dataclass(frozen=True)
class FlConfig:
    layer_dims: tuple[int, ...]
    participation_rate: float = 1.0
    work: LocalWork = LocalWork(epochs=1)
    batch_size: int = 20
    optimizer: SgdConfig = SgdConfig()
    patience: int = 50
    window: int = 20
    round_cap: int = 5000


@dataclass
class ClientData:
    train: LabeledDataset
    validation: LabeledDataset | None

    @property
    def size(self) -> int:
        return len(self.train) + (0 if self.validation is None else len(self.validation))

    def label_distribution(self) -> LabelDistribution:
        parts = [label_distribution(self.train)]
        if self.validation is not None:
            parts.append(label_distribution(self.validation))
        return aggregate_label_distributions(parts)


@dataclass(frozen=True)
class ParticipantRecord:
    cohort: int
    round: int
    client: int
    batches: int
    compute_s: float
    bytes: int
    duration_s: float


@dataclass(frozen=True)
class RoundEvent:
    cohort: int
    round: int
    duration_s: float
    val_loss: float | None
    compute_s: float
    bytes: int


@dataclass
class CohortModelBundle:
    cohort: int
    model: MlpModel
    labels: LabelDistribution
    finish_time_s: float
    rounds: int
    cap_hit: bool = False
    num_samples: int = 0


@dataclass
class ResourceLedger:
    """Append-only log of who computed and sent what.

    ``events`` is the per-round breakdown; every total is recomputed from it
    (compute seconds with ``math.fsum``, so summation order never matters).
    """

    participants: list[ParticipantRecord] = field(default_factory=list)
    events: list[RoundEvent] = field(default_factory=list)
    final_uploads: dict[int, int] = field(default_factory=dict)

    def merge(self, other: "ResourceLedger") -> None:
        self.participants.extend(other.participants)
        self.events.extend(other.events)
        self.final_uploads.update(other.final_uploads)

    @property
    def compute_seconds(self) -> float:
        return math.fsum(e.compute_s for e in self.events)

    @property
    def bytes_total(self) -> int:
        return sum(e.bytes for e in self.events) + sum(self.final_uploads.values())

    def cohort_compute(self) -> dict[int, float]:
        per: dict[int, list[float]] = {}
        for e in self.events:
            per.setdefault(e.cohort, []).append(e.compute_s)
        return {c: math.fsum(v) for c, v in sorted(per.items())}

    def cohort_bytes(self) -> dict[int, int]:
        per: dict[int, int] = {c: b for c, b in self.final_uploads.items()}
        for e in self.events:
            per[e.cohort] = per.get(e.cohort, 0) + e.bytes
        return dict(sorted(per.items()))

    def client_compute(self) -> dict[int, float]:
        per: dict[int, list[float]] = {}
        for p in self.participants:
            per.setdefault(p.client, []).append(p.compute_s)
        return {k: math.fsum(v) for k, v in sorted(per.items())}

    def client_bytes(self) -> dict[int, int]:
        per: dict[int, int] = {}
        for p in self.participants:
            per[p.client] = per.get(p.client, 0) + p.bytes
        return dict(sorted(per.items()))


@dataclass
class SimClock:
    cohort_times: dict[int, float] = field(default_factory=dict)

    def advance(self, cohort: int, seconds: float) -> float:
        if seconds < 0:
            raise InvalidInputError("time cannot move backwards")
        self.cohort_times[cohort] = self.cohort_times.get(cohort, 0.0) + seconds
        return self.cohort_times[cohort]

    @property
    def global_finish(self) -> float:
        return max(self.cohort_times.values(), default=0.0)


@dataclass
class CohortRun:
    bundle: CohortModelBundle
    ledger: ResourceLedger
    losses: list[float]


RoundObserver = Callable[[int, int, MlpModel, RoundEvent], None]


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values))


def run_cohort_session(
    cohort: int,
    clients: Sequence[int],
    data: dict[int, ClientData],
    profiles: dict[int, DeviceProfile],
    config: FlConfig,
    seed: int,
    observer: RoundObserver | None = None,
) -> CohortRun:
    """FedAvg inside one cohort until the stopping rule fires or the round cap is hit.

    The stopping signal is the mean validation loss of this round's
    participants; a cohort without any validation reporters uses their mean
    training loss instead.
    """
    clients = sorted(clients)
    if not clients:
        raise InvalidInputError(f"cohort {cohort} is empty")
    for k in clients:
        if k not in data or k not in profiles:
            raise InvalidInputError(f"client {k} lacks data or a device profile")

    model = init_model(config.layer_dims, seeding.rng(seed, "init", cohort))
    size_bytes = model_bytes(model)
    stopping = StoppingState(window=config.window, patience=config.patience)
    use_validation = any(data[k].validation is not None for k in clients)
    ledger = ResourceLedger()
    clock = SimClock()
    losses: list[float] = []
    stopped = False
    rounds = 0

    for t in range(config.round_cap):
        rounds = t + 1
        participants = sample_participants(clients, config.participation_rate, t, seed, cohort)
        updates, records, train_losses = [], [], []
        for k in participants:
            result = local_update(
                model, data[k].train, config.work, config.batch_size, config.optimizer,
                seeding.rng(seed, "local", cohort, t, k),
            )
            if result is None:
                continue
            profile = profiles[k]
            updates.append((result.model.params(), len(data[k].train)))
            train_losses.append(result.train_loss)
            records.append(ParticipantRecord(
                cohort, t, k, result.batches,
                compute_seconds(profile, result.batches),
                2 * size_bytes,
                client_round_duration(profile, size_bytes, result.batches),
            ))
        if updates:
            model = MlpModel.from_params(config.layer_dims, fedavg_aggregate(updates))

        signal = None
        if use_validation:
            val = [evaluate(model, data[k].validation)[1]
                   for k in participants if data[k].validation is not None]
            if val:
                signal = _mean(val)
        elif train_losses:
            signal = _mean(train_losses)

        event = RoundEvent(
            cohort, t,
            max((r.duration_s for r in records), default=0.0),
            signal if use_validation else None,
            math.fsum(r.compute_s for r in records),
            sum(r.bytes for r in records),
        )
        clock.advance(cohort, event.duration_s)
        ledger.participants.extend(records)
        ledger.events.append(event)
        if observer is not None:
            observer(cohort, t, model, event)
        if signal is not None:
            losses.append(signal)
            _, stopped = smooth_and_check(stopping, signal)
            if stopped:
                break

    ledger.final_uploads[cohort] = size_bytes
    labels = aggregate_label_distributions([data[k].label_distribution() for k in clients])
    bundle = CohortModelBundle(
        cohort, model, labels, clock.global_finish, rounds,
        cap_hit=not stopped, num_samples=sum(data[k].size for k in clients),
    )
    return CohortRun(bundle, ledger, losses)


@dataclass
class SimulationSetup:
    assignment: CohortAssignment
    data: dict[int, ClientData]
    profiles: dict[int, DeviceProfile]
    config: FlConfig
    seed: int

    def validate(self) -> None:
        members = self.assignment.membership
        for k in sorted(members):
            if k not in self.data:
                raise InvalidInputError(f"client {k} has no dataset")
            if self.data[k].size == 0:
                raise InvalidInputError(f"client {k} has no data samples")
            if k not in self.profiles:
                raise InvalidInputError(f"client {k} has no device profile")
        for i, group in enumerate(self.assignment.cohorts()):
            if not group:
                raise InvalidInputError(f"cohort {i} has no clients")


@dataclass
class SimulationResult:
    bundles: list[CohortModelBundle]
    clock: SimClock
    ledger: ResourceLedger
    losses: dict[int, list[float]]


def _session_job(args: tuple) -> CohortRun:
    setup, cohort = args
    clients = setup.assignment.members(cohort)
    return run_cohort_session(
        cohort, clients,
        {k: setup.data[k] for k in clients},
        {k: setup.profiles[k] for k in clients},
        setup.config, setup.seed,
    )


def run_simulation(setup: SimulationSetup, workers: int = 1) -> SimulationResult:
    """Run every cohort session and merge the results in cohort order.

    Sessions share nothing, so ``workers > 1`` only changes wall-clock time.
    """
    setup.validate()
    jobs = [(setup, i) for i in range(setup.assignment.num_cohorts)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_session_job, jobs))
    else:
        runs = [_session_job(job) for job in jobs]

    ledger = ResourceLedger()
    clock = SimClock()
    for run in runs:
        ledger.merge(run.ledger)
        clock.advance(run.bundle.cohort, run.bundle.finish_time_s)
    return SimulationResult(
        [r.bundle for r in runs], clock, ledger,
        {r.bundle.cohort: r.losses for r in runs},
    )


def finish_time_ecdf(bundles: Sequence[CohortModelBundle]) -> list[tuple[float, float]]:
    """Step points ``(t, share of cohorts finished by t)`` at each distinct finish time."""
    if not bundles:
        raise InvalidInputError("no cohorts to summarize")
    times = np.sort([b.finish_time_s for b in bundles])
    distinct, counts = np.unique(times, return_counts=True)
    cumulative = np.cumsum(counts)
    return [(float(t), float(c) / len(times)) for t, c in zip(distinct, cumulative)]
