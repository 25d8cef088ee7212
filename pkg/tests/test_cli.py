import subprocess
import sys

import pytest

from cpfl.cli import main
from cpfl.nn import deserialize
from cpfl.report import read_csv
from cpfl.traces import load_traces

CONFIG = """[federation]
M: 6
alpha: 0.5
r: 3
w: 2
round_cap: 200
[data]
classes: 3
dim: 4
train_per_class: 20
test_per_class: 10
public_factor: 2
[model]
hidden: 6
[distillation]
distill_epochs: 2
distill_batch: 64
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(CONFIG)
    return path


def test_run_with_cohort_list_and_bundles(tmp_path, cfg, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--n", "1,3", "--out", str(out), "--save-bundles"]) == 0
    rows = read_csv(out / "summary.csv")
    assert [r["n"] for r in rows] == ["1", "3"]
    assert (out / "bundles" / "n3" / "bundles.json").exists()
    deserialize((out / "bundles" / "n3" / "cohort_0.bin").read_bytes())
    assert "n=3" in capsys.readouterr().out

    assert main(["distill-only", "--config", str(cfg), "--bundles", str(out / "bundles" / "n3"),
                 "--out", str(tmp_path / "kd"), "--soft-targets"]) == 0
    targets = read_csv(tmp_path / "kd" / "soft_targets.csv")
    assert len(targets) == 2 * 3 * 20 and list(targets[0]) == ["c0", "c1", "c2"]

    assert main(["bound", "--config", str(cfg), "--bundles", str(out / "bundles" / "n3"), "--delta", "0.1"]) == 0
    text = capsys.readouterr().out
    assert "risk_term=" in text and "omitted" in text


def test_flag_overrides_config_file(tmp_path, cfg):
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--n", "2", "--seed", "5", "--out", str(out)]) == 0
    assert read_csv(out / "summary.csv")[0]["seed"] == "5"


def test_out_dir_env_override(tmp_path, cfg, monkeypatch):
    monkeypatch.setenv("CPFL_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "ignored")]) == 0
    assert (tmp_path / "env" / "summary.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_gen_traces_and_gen_data(tmp_path, cfg):
    traces = tmp_path / "t.csv"
    assert main(["gen-traces", "--count", "7", "--seed", "2", "--out", str(traces)]) == 0
    assert len(load_traces(traces)) == 7
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    assert len(read_csv(tmp_path / "d" / "train.csv")) == 3 * 20
    assert len(list((tmp_path / "d" / "clients").glob("client_*.csv"))) == 6


def test_run_uses_a_trace_file(tmp_path, cfg):
    traces = tmp_path / "t.csv"
    main(["gen-traces", "--count", "3", "--out", str(traces)])
    assert main(["run", "--config", str(cfg), "--traces", str(traces), "--out", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize("argv, needle", [
    (["run", "--n", "0"], "num_cohorts"),
    (["run", "--alpha", "-1"], "alpha"),
    (["run", "--config", "/nonexistent.cfg"], "config"),
    (["bound", "--bundles", "/nonexistent"], "bundles.json"),
])
def test_errors_exit_nonzero_with_one_line(argv, needle, capsys, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) != 0
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and needle in err


def test_bad_trace_file_reports_line(tmp_path, cfg, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("device_id,network_bytes_per_sec,compute_sec_per_batch\nd,1,x\n")
    assert main(["run", "--config", str(cfg), "--traces", str(bad), "--out", str(tmp_path)]) != 0
    assert "bad.csv:2:" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cpfl.cli", "run", "--n", "0"], capture_output=True,
                          text=True, cwd=tmp_path)
    assert proc.returncode != 0 and proc.stderr.startswith("error:")
