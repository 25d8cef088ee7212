"""Command-line front end: ``cpfl run | gen-traces | gen-data | distill-only | bound``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from . import seeding
from .bound import bound_report
from .config import ExperimentConfig, build_config, output_dir, read_config_file
from .data import LabelDistribution, save_dataset_csv
from .distill import build_soft_targets, compute_weights
from .errors import ConfigError, InvalidInputError, TraceParseError
from .experiment import build_federation, distill_bundles, finish_experiment, public_set, run_stage_one
from .nn import deserialize, evaluate, serialize
from .report import emit_report, fmt, write_soft_targets
from .sim import CohortModelBundle
from .traces import gen_traces, save_traces

BUNDLE_INDEX = "bundles.json"


def _add_config_flags(parser: argparse.ArgumentParser, with_n: bool = True) -> None:
    parser.add_argument("--config", help="key: value config file; flags override it")
    parser.add_argument("--out", default="out", help="output directory (CPFL_OUT_DIR overrides)")
    group = parser.add_argument_group("experiment fields")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "num_cohorts":
            continue
        group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="V")
    if with_n:
        group.add_argument("--n", "--num-cohorts", dest="num_cohorts", default=None,
                           help="cohort count; run accepts a comma list such as 1,4,16")


def _configs(args) -> list[ExperimentConfig]:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {f.name: getattr(args, f.name, None) for f in dataclasses.fields(ExperimentConfig)}
    cohorts = flags.pop("num_cohorts")
    base = build_config(file_values, flags)
    if cohorts is None:
        return [base]
    try:
        counts = [int(v) for v in str(cohorts).split(",") if v.strip()]
    except ValueError:
        raise ConfigError("num_cohorts", f"cannot parse {cohorts!r}") from None
    if not counts:
        raise ConfigError("num_cohorts", "empty cohort list")
    return [dataclasses.replace(base, num_cohorts=n).validate() for n in counts]


def _save_bundles(path: Path, bundles: Sequence[CohortModelBundle], members: list[list[int]]) -> None:
    path.mkdir(parents=True, exist_ok=True)
    index = []
    for b in bundles:
        name = f"cohort_{b.cohort}.bin"
        (path / name).write_bytes(serialize(b.model))
        index.append({
            "cohort": b.cohort, "checkpoint": name, "labels": b.labels.counts.tolist(),
            "finish_time_s": b.finish_time_s, "rounds": b.rounds, "cap_hit": b.cap_hit,
            "num_samples": b.num_samples, "clients": members[b.cohort],
        })
    (path / BUNDLE_INDEX).write_text(json.dumps(index, indent=1, sort_keys=True) + "\n")


def _load_bundles(path: Path) -> tuple[list[CohortModelBundle], list[list[int]]]:
    try:
        index = json.loads((path / BUNDLE_INDEX).read_text())
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path / BUNDLE_INDEX}: {exc.strerror}") from None
    bundles, members = [], []
    for entry in index:
        model = deserialize((path / entry["checkpoint"]).read_bytes())
        bundles.append(CohortModelBundle(
            entry["cohort"], model, LabelDistribution(entry["labels"]), entry["finish_time_s"],
            entry["rounds"], entry["cap_hit"], entry["num_samples"],
        ))
        members.append(entry["clients"])
    if not bundles:
        raise InvalidInputError(f"{path} holds no cohort bundles")
    return bundles, members


def cmd_run(args) -> int:
    configs = _configs(args)
    out = output_dir(args.out)
    federation = build_federation(configs[0])
    reports = []
    for config in configs:
        stage = run_stage_one(config, federation)
        if args.save_bundles:
            members = [stage.assignment.members(i) for i in range(config.num_cohorts)]
            _save_bundles(out / "bundles" / f"n{config.num_cohorts}", stage.sim.bundles, members)
        report = finish_experiment(config, stage)
        reports.append(report)
        print(f"n={report.num_cohorts} student_acc={report.student_acc:.4f} "
              f"teacher_acc={report.teacher_acc_mean:.4f} "
              f"finish_h={report.finish_time_s / 3600:.2f} cpu_h={report.compute_s / 3600:.2f} "
              f"cap_hits={report.cap_hits}")
    emit_report(reports, out, events=not args.no_events, kd_wall=args.kd_wall)
    print(f"wrote {out}")
    return 0


def cmd_gen_traces(args) -> int:
    profiles = gen_traces(args.count, seeding.rng(args.seed, "traces"))
    save_traces(args.out, profiles)
    print(f"wrote {len(profiles)} profiles to {args.out}")
    return 0


def cmd_gen_data(args) -> int:
    (config,) = _configs(args)
    out = output_dir(args.out)
    fed = build_federation(config)
    (out / "clients").mkdir(parents=True, exist_ok=True)
    save_dataset_csv(out / "train.csv", fed.train)
    save_dataset_csv(out / "test.csv", fed.test)
    save_dataset_csv(out / "public.csv", public_set(config, len(fed.train)))
    for k, ds in enumerate(fed.clients):
        save_dataset_csv(out / "clients" / f"client_{k}.csv", ds)
    print(f"wrote {len(fed.clients)} client files to {out}")
    return 0


def cmd_distill_only(args) -> int:
    (config,) = _configs(args)
    bundles, _ = _load_bundles(Path(args.bundles))
    config = dataclasses.replace(config, num_cohorts=len(bundles))
    fed = build_federation(config)
    kd, teachers, _ = distill_bundles(config, bundles, len(fed.train))
    acc, loss = evaluate(kd.student, fed.test)
    out = output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "student.bin").write_bytes(serialize(kd.student))
    if args.soft_targets:
        weights = compute_weights([b.labels for b in teachers], config.weighting == "per-class")
        public = public_set(config, len(fed.train))
        write_soft_targets(out / "soft_targets.csv", build_soft_targets([b.model for b in teachers], public, weights))
    print(f"teachers={len(teachers)} student_acc={fmt(acc)} student_loss={fmt(loss)} "
          f"kd_loss={fmt(kd.initial_loss)}->{fmt(kd.final_loss)}")
    return 0


def cmd_bound(args) -> int:
    (config,) = _configs(args)
    bundles, members = _load_bundles(Path(args.bundles))
    fed = build_federation(config)
    datasets = [[fed.clients[k] for k in group] for group in members]
    weights = compute_weights([b.labels for b in bundles], config.weighting == "per-class")
    report = bound_report(bundles, datasets, weights, args.delta)
    print(f"risk_term={fmt(report.risk_term)} hoeffding_term={fmt(report.hoeffding_term)} "
          f"m={report.samples_per_source}")
    print(f"note: {report.note}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpfl", description="Cohort-parallel federated learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate cohorts, distill, and write CSV reports")
    _add_config_flags(run)
    run.add_argument("--no-events", action="store_true", help="leave events.csv header-only")
    run.add_argument("--kd-wall", action="store_true", help="also write kd_wall.csv (not reproducible)")
    run.add_argument("--save-bundles", action="store_true", help="store cohort checkpoints under OUT/bundles")
    run.set_defaults(func=cmd_run)

    traces = sub.add_parser("gen-traces", help="write a synthetic device trace file")
    traces.add_argument("--count", type=int, default=1000)
    traces.add_argument("--seed", type=int, default=1)
    traces.add_argument("--out", default="traces.csv")
    traces.set_defaults(func=cmd_gen_traces)

    data = sub.add_parser("gen-data", help="write the synthetic task, client splits and public set")
    _add_config_flags(data)
    data.set_defaults(func=cmd_gen_data)

    distill = sub.add_parser("distill-only", help="distill a student from saved cohort bundles")
    _add_config_flags(distill, with_n=False)
    distill.add_argument("--bundles", required=True, help="directory holding bundles.json")
    distill.add_argument("--soft-targets", action="store_true", help="also write soft_targets.csv")
    distill.set_defaults(func=cmd_distill_only)

    bound = sub.add_parser("bound", help="computable terms of the student risk bound")
    _add_config_flags(bound, with_n=False)
    bound.add_argument("--bundles", required=True, help="directory holding bundles.json")
    bound.add_argument("--delta", type=float, default=0.05)
    bound.set_defaults(func=cmd_bound)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError, TraceParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
