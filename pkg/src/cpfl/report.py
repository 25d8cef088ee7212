"""CSV output for experiment runs.

Every real number is written with six fixed decimals, so rerunning the same
configuration into a fresh directory reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .experiment import RunReport

SUMMARY_FIELDS = [
    "n", "num_clients", "alpha", "seed", "student_acc", "student_loss",
    "teacher_acc_mean", "teacher_acc_std", "delta", "finish_time_s", "distill_start_s",
    "compute_s", "bytes_total", "model_bytes", "rounds_total", "cap_hits",
    "kd_teacher_passes", "kd_steps", "kd_initial_loss", "kd_final_loss",
]
ECDF_FIELDS = ["n", "seed", "finish_time_s", "fraction"]
COHORT_FIELDS = ["n", "seed", "cohort", "clients", "samples", "rounds", "finish_time_s",
                 "cap_hit", "teacher_acc", "in_quorum"]
EVENT_FIELDS = ["n", "seed", "cohort", "round", "duration_s", "val_loss", "compute_s", "bytes"]
KD_WALL_FIELDS = ["n", "seed", "kd_wall_s"]


def fmt(value) -> str:
    """Fixed formatting: ints and bools as integers, reals with 6 decimals."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.6f}"


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def summary_row(r: RunReport) -> list:
    return [
        r.num_cohorts, r.num_clients, r.alpha, r.seed, r.student_acc, r.student_loss,
        r.teacher_acc_mean, r.teacher_acc_std, r.delta, r.finish_time_s, r.distill_start_s,
        r.compute_s, r.bytes_total, r.model_bytes, r.rounds_total, r.cap_hits,
        r.kd_teacher_passes, r.kd_steps, r.kd_initial_loss, r.kd_final_loss,
    ]


def emit_report(
    reports: Sequence[RunReport],
    out_dir: str | Path,
    events: bool = True,
    kd_wall: bool = False,
) -> list[Path]:
    """Write summary, ECDF, per-cohort and (optionally) per-round CSVs.

    With ``events=False`` the event file still exists but holds only its
    header. KD wall-clock time depends on the machine, so it goes into a
    separate ``kd_wall.csv`` and only when ``kd_wall`` is set.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("summary", "ecdf", "cohorts", "events")}
    _write(paths["summary"], SUMMARY_FIELDS, (summary_row(r) for r in reports))
    _write(paths["ecdf"], ECDF_FIELDS,
           ([r.num_cohorts, r.seed, t, f] for r in reports for t, f in r.ecdf))
    _write(paths["cohorts"], COHORT_FIELDS, (
        [r.num_cohorts, r.seed, c.cohort, c.clients, c.samples, c.rounds, c.finish_time_s,
         c.cap_hit, c.teacher_acc, c.in_quorum]
        for r in reports for c in r.cohorts
    ))
    event_rows = (
        [r.num_cohorts, r.seed, e.cohort, e.round, e.duration_s, e.val_loss, e.compute_s, e.bytes]
        for r in reports for e in (r.events if events else [])
    )
    _write(paths["events"], EVENT_FIELDS, event_rows)
    written = list(paths.values())
    if kd_wall:
        path = out / "kd_wall.csv"
        _write(path, KD_WALL_FIELDS, ([r.num_cohorts, r.seed, r.kd_wall_s] for r in reports))
        written.append(path)
    return written


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_soft_targets(path: str | Path, targets: np.ndarray) -> None:
    """One row per public sample, one column per class."""
    targets = np.asarray(targets)
    _write(Path(path), [f"c{j}" for j in range(targets.shape[1])], targets.tolist())
