import dataclasses

import pytest

from cpfl.config import build_config
from cpfl.experiment import RunReport, build_federation, run_experiment
from cpfl.report import COHORT_FIELDS, ECDF_FIELDS, EVENT_FIELDS, SUMMARY_FIELDS, emit_report, fmt, read_csv

from crosscheck import crosscheck

TINY = {
    "M": 8, "n": 2, "alpha": 0.5, "seed": 3, "train_per_class": 30, "test_per_class": 10,
    "classes": 4, "dim": 4, "hidden": "8", "patience": 3, "window": 2, "distill_epochs": 2,
    "public_factor": 2, "round_cap": 300, "distill_batch": 64,
}


@pytest.fixture(scope="module")
def reports():
    base = build_config(TINY)
    fed = build_federation(base)
    return [run_experiment(dataclasses.replace(base, num_cohorts=n), fed) for n in (1, 2, 8)]


def test_fixed_decimal_formatting():
    assert fmt(0.1) == "0.100000"
    assert fmt(2) == "2"
    assert fmt(True) == "1"
    assert fmt(None) == ""
    assert fmt(1 / 3) == "0.333333"


def test_files_and_headers(tmp_path, reports):
    emit_report(reports, tmp_path)
    assert (tmp_path / "summary.csv").read_text().splitlines()[0] == ",".join(SUMMARY_FIELDS)
    assert len(read_csv(tmp_path / "summary.csv")) == 3
    cohorts = read_csv(tmp_path / "cohorts.csv")
    assert [r["n"] for r in cohorts] == ["1", "2", "2"] + ["8"] * 8
    assert list(cohorts[0]) == COHORT_FIELDS
    assert list(read_csv(tmp_path / "events.csv")[0]) == EVENT_FIELDS
    assert not (tmp_path / "kd_wall.csv").exists()


def test_ecdf_ends_at_one_per_run(tmp_path, reports):
    emit_report(reports, tmp_path)
    rows = read_csv(tmp_path / "ecdf.csv")
    assert list(rows[0]) == ECDF_FIELDS
    for n in ("1", "2", "8"):
        assert [r for r in rows if r["n"] == n][-1]["fraction"] == "1.000000"


def test_empty_sections_are_header_only(tmp_path, reports):
    emit_report([], tmp_path / "none")
    for name, header in [("summary", SUMMARY_FIELDS), ("ecdf", ECDF_FIELDS),
                         ("cohorts", COHORT_FIELDS), ("events", EVENT_FIELDS)]:
        assert (tmp_path / "none" / f"{name}.csv").read_text() == ",".join(header) + "\n"
    emit_report(reports, tmp_path / "quiet", events=False)
    assert (tmp_path / "quiet" / "events.csv").read_text() == ",".join(EVENT_FIELDS) + "\n"


def test_rerun_writes_identical_bytes(tmp_path, reports):
    first = [p.read_bytes() for p in emit_report(reports, tmp_path / "a")]
    again = [run_experiment(dataclasses.replace(build_config(TINY), num_cohorts=r.num_cohorts))
             for r in reports]
    second = [p.read_bytes() for p in emit_report(again, tmp_path / "a")]
    assert first == second


def test_summary_is_recomputable_from_events(tmp_path, reports):
    emit_report(reports, tmp_path)
    assert crosscheck(tmp_path) == []


def test_crosscheck_catches_tampering(tmp_path, reports):
    emit_report(reports, tmp_path)
    path = tmp_path / "summary.csv"
    lines = path.read_text().splitlines()
    cells = lines[1].split(",")
    cells[SUMMARY_FIELDS.index("compute_s")] = "1.000000"
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    assert crosscheck(tmp_path)


def test_kd_wall_only_on_request(tmp_path, reports):
    emit_report(reports, tmp_path, kd_wall=True)
    rows = read_csv(tmp_path / "kd_wall.csv")
    assert len(rows) == 3 and all(float(r["kd_wall_s"]) >= 0 for r in rows)


def test_report_fields_are_populated(reports):
    for r in reports:
        assert isinstance(r, RunReport)
        assert 0 <= r.student_acc <= 1 and len(r.teacher_accs) == r.num_cohorts
        assert r.finish_time_s > 0 and r.compute_s > 0 and r.bytes_total > 0
        assert r.ecdf[-1][1] == 1.0 and len(r.cohorts) == r.num_cohorts
        assert r.distill_start_s == r.finish_time_s  # quorum 1.0 waits for everyone


def test_teacher_passes_count_public_set_per_teacher(reports):
    public_size = 2 * 4 * 30  # public_factor x training samples
    assert [r.kd_teacher_passes for r in reports] == [public_size, 2 * public_size, 8 * public_size]
