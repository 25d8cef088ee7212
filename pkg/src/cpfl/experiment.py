"""End-to-end runs: build the federation, train cohorts, distill, evaluate."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .config import ExperimentConfig
from .data import (
    LabeledDataset,
    UnlabeledDataset,
    dirichlet_partition,
    gen_public,
    gen_synthetic,
    split_validation,
    stratified_split,
)
from .distill import DistillSchedule, build_soft_targets, compute_weights, train_student
from .errors import InvalidInputError
from .fl import LocalWork, SgdConfig, partition_cohorts
from .nn import evaluate, init_model, model_bytes
from .sim import (
    ClientData,
    CohortModelBundle,
    FlConfig,
    RoundEvent,
    SimulationResult,
    SimulationSetup,
    finish_time_ecdf,
    run_simulation,
)
from .traces import assign_profiles, gen_traces, load_traces

PARTITION_ATTEMPTS = 1000


@dataclass
class Federation:
    """Everything about a run that does not depend on the cohort count."""

    train: LabeledDataset
    test: LabeledDataset
    clients: list[LabeledDataset]
    data: dict[int, ClientData]
    profiles: dict


def partition_clients(config: ExperimentConfig, train: LabeledDataset) -> list[LabeledDataset]:
    """Dirichlet split, redrawn until every client holds ``min_client_samples``."""
    for attempt in range(PARTITION_ATTEMPTS):
        clients = dirichlet_partition(
            train, config.num_clients, config.alpha,
            seeding.rng(config.seed, "partition", attempt),
        )
        if min(len(c) for c in clients) >= config.min_client_samples:
            return clients
    raise InvalidInputError(
        f"no partition with >= {config.min_client_samples} samples per client "
        f"after {PARTITION_ATTEMPTS} draws; lower min_client_samples or raise alpha"
    )


def build_federation(config: ExperimentConfig) -> Federation:
    seed = config.seed
    full = gen_synthetic(
        config.classes, config.dim, config.train_per_class + config.test_per_class,
        config.cluster_spread, seed,
    )
    train, test = stratified_split(full, config.test_per_class, seeding.rng(seed, "test-split"))
    clients = partition_clients(config, train)
    data = {}
    for k, ds in enumerate(clients):
        tr, val = split_validation(
            ds, config.validation_fraction, config.validation_min_samples,
            seeding.rng(seed, "validation", k),
        )
        data[k] = ClientData(tr, val)
    if config.traces == "generated":
        pool = gen_traces(config.trace_count, seeding.rng(seed, "traces"))
    else:
        pool = load_traces(config.traces)
    profiles = assign_profiles(config.num_clients, pool, seeding.rng(seed, "assign"))
    return Federation(train, test, clients, data, profiles)


def fl_config(config: ExperimentConfig) -> FlConfig:
    return FlConfig(
        layer_dims=config.layer_dims,
        participation_rate=config.participation_rate,
        work=LocalWork(epochs=config.local_epochs, steps=config.local_steps),
        batch_size=config.batch_size,
        optimizer=SgdConfig(config.lr, config.momentum),
        patience=config.patience,
        window=config.window,
        round_cap=config.round_cap,
    )


def public_set(config: ExperimentConfig, train_size: int) -> UnlabeledDataset:
    size = max(1, int(round(config.public_factor * train_size)))
    return gen_public(
        config.classes, config.dim, size, config.cluster_spread,
        config.seed, seeding.child_seed(config.seed, "public"), config.public_shift,
    )


def quorum_bundles(bundles: list[CohortModelBundle], quorum: float) -> list[CohortModelBundle]:
    """The first ceil(quorum * n) cohorts to finish, returned in cohort order."""
    need = max(1, math.ceil(quorum * len(bundles) - 1e-12))
    by_finish = sorted(bundles, key=lambda b: (b.finish_time_s, b.cohort))[:need]
    return sorted(by_finish, key=lambda b: b.cohort)


@dataclass
class CohortRow:
    cohort: int
    clients: int
    samples: int
    rounds: int
    finish_time_s: float
    cap_hit: bool
    teacher_acc: float
    in_quorum: bool


@dataclass
class RunReport:
    num_cohorts: int
    num_clients: int
    alpha: float
    seed: int
    student_acc: float
    student_loss: float
    teacher_accs: list[float]
    finish_time_s: float
    distill_start_s: float
    compute_s: float
    bytes_total: int
    model_bytes: int
    rounds_total: int
    cap_hits: int
    kd_teacher_passes: int
    kd_steps: int
    kd_initial_loss: float
    kd_final_loss: float
    ecdf: list[tuple[float, float]]
    cohorts: list[CohortRow]
    events: list[RoundEvent] = field(default_factory=list)
    kd_wall_s: float = 0.0

    @property
    def teacher_acc_mean(self) -> float:
        return float(np.mean(self.teacher_accs))

    @property
    def teacher_acc_std(self) -> float:
        return float(np.std(self.teacher_accs))

    @property
    def delta(self) -> float:
        return self.student_acc - self.teacher_acc_mean


@dataclass
class StageOneResult:
    federation: Federation
    assignment: object
    sim: SimulationResult


def run_stage_one(config: ExperimentConfig, federation: Federation | None = None) -> StageOneResult:
    config.validate()
    federation = federation or build_federation(config)
    assignment = partition_cohorts(
        config.num_clients, config.num_cohorts, seeding.rng(config.seed, "cohorts")
    )
    setup = SimulationSetup(assignment, federation.data, federation.profiles,
                            fl_config(config), config.seed)
    return StageOneResult(federation, assignment, run_simulation(setup, workers=config.workers))


def distill_bundles(
    config: ExperimentConfig,
    bundles: list[CohortModelBundle],
    train_size: int,
):
    """Stage two on the quorum of ``bundles``; returns (student result, teachers used)."""
    teachers = quorum_bundles(bundles, config.distill_quorum)
    weights = compute_weights([b.labels for b in teachers], per_class=config.weighting == "per-class")
    public = public_set(config, train_size)
    targets = build_soft_targets([b.model for b in teachers], public, weights)
    student = init_model(config.layer_dims, seeding.rng(config.seed, "student"))
    schedule = DistillSchedule(config.distill_epochs, config.distill_batch, config.distill_lr)
    result = train_student(student, public, targets, schedule, seeding.rng(config.seed, "distill"))
    return result, teachers, len(public)


def run_experiment(config: ExperimentConfig, federation: Federation | None = None) -> RunReport:
    """Both stages for one cohort count. Deterministic in ``config``."""
    return finish_experiment(config, run_stage_one(config, federation))


def finish_experiment(config: ExperimentConfig, stage: StageOneResult) -> RunReport:
    """Distill and evaluate on top of a completed stage one."""
    fed, sim = stage.federation, stage.sim
    bundles = sim.bundles

    started = time.perf_counter()
    kd, teachers, public_size = distill_bundles(config, bundles, len(fed.train))
    kd_wall = time.perf_counter() - started

    student_acc, student_loss = evaluate(kd.student, fed.test)
    in_quorum = {b.cohort for b in teachers}
    rows = []
    for b in bundles:
        acc, _ = evaluate(b.model, fed.test)
        rows.append(CohortRow(
            b.cohort, len(stage.assignment.members(b.cohort)), b.num_samples, b.rounds,
            b.finish_time_s, b.cap_hit, acc, b.cohort in in_quorum,
        ))
    return RunReport(
        num_cohorts=config.num_cohorts,
        num_clients=config.num_clients,
        alpha=config.alpha,
        seed=config.seed,
        student_acc=student_acc,
        student_loss=student_loss,
        teacher_accs=[r.teacher_acc for r in rows],
        finish_time_s=sim.clock.global_finish,
        distill_start_s=max(b.finish_time_s for b in teachers),
        compute_s=sim.ledger.compute_seconds,
        bytes_total=sim.ledger.bytes_total,
        model_bytes=model_bytes(bundles[0].model),
        rounds_total=sum(b.rounds for b in bundles),
        cap_hits=sum(b.cap_hit for b in bundles),
        kd_teacher_passes=len(teachers) * public_size,
        kd_steps=kd.steps,
        kd_initial_loss=kd.initial_loss,
        kd_final_loss=kd.final_loss,
        ecdf=finish_time_ecdf(bundles),
        cohorts=rows,
        events=list(sim.ledger.events),
        kd_wall_s=kd_wall,
    )
