"""Unit tests for the command-line surface."""
import json
import os

import pandas as pd
import pytest

from driftcast.cli import exit_code_for, main
from driftcast.exceptions import BadValue, Diverged, DriftcastError, EmptyData

SMALL = """\
# tiny synthetic experiment
dataset = "synthetic"
synthetic = {"n_variates": 2, "n_steps": 400, "n_regimes": 2, "segment_length": 50, "seed": 3}
split_ratios = [50, 25, 25]
models = ["mlp"]
hidden = 8
lookback = 16
horizon = [4]
epochs = 1
adapter_epochs = 1
batch_size = 32
d_c = 4
rank = 2
seeds = [0]
"""


def _config(tmp_path, extra=""):
    path = tmp_path / "exp.env"
    path.write_text(SMALL + extra)
    return str(path)


def _run(tmp_path, extra, out="out", *more):
    out_dir = str(tmp_path / out)
    code = main(["--config", _config(tmp_path, extra), "--out", out_dir, *more])
    return code, out_dir


def test_exit_codes_by_error_family():
    """Test each error family maps to its exit status."""
    assert exit_code_for(BadValue("lookback", "bad")) == 2
    assert exit_code_for(EmptyData("nothing")) == 3
    assert exit_code_for(Diverged("nan")) == 4
    assert exit_code_for(DriftcastError("other")) == 1


def test_run_single_frozen_cell(tmp_path):
    """Test one strategy and one seed produce one report and a one-row summary."""
    code, out_dir = _run(tmp_path, 'strategy = ["frozen"]\n', "out", "run")
    assert code == 0
    with open(os.path.join(out_dir, "synthetic_mlp_frozen_none_H4_seed0.json"), encoding="utf-8") as f:
        report = json.load(f)
    assert report["n_test"] == 400 - 4 - 300 + 1
    assert report["leakage_audit"]["oracle_reads"] == 0
    summary = pd.read_csv(os.path.join(out_dir, "summary.csv"))
    assert len(summary) == 1
    assert list(summary.columns)[:4] == ["dataset", "model", "strategy", "variant"]
    assert os.path.exists(os.path.join(out_dir, "summary_mean.csv"))
    assert os.path.exists(os.path.join(out_dir, "metrics.prom"))
    assert os.path.exists(os.path.join(out_dir, "checkpoints", "synthetic_mlp_H4_seed0.pretrained.ckpt.json"))
    with open(os.path.join(out_dir, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["complete"]
    assert manifest["cells"][0]["report"] == "synthetic_mlp_frozen_none_H4_seed0.json"


def test_run_fills_gap_columns(tmp_path):
    """Test the summary carries the practical-versus-oracle gap and the frozen comparison."""
    code, out_dir = _run(tmp_path, 'strategy = ["frozen", "gd_practical", "gd_optimal"]\n', "out", "run")
    assert code == 0
    summary = pd.read_csv(os.path.join(out_dir, "summary.csv")).set_index("strategy")
    assert pd.notna(summary.loc["gd_practical", "delta_mse"])
    assert pd.isna(summary.loc["gd_optimal", "delta_mse"])
    assert pd.notna(summary.loc["gd_optimal", "improvement_vs_frozen_pct"])
    optimal = summary.loc["gd_optimal"]
    practical = summary.loc["gd_practical"]
    expected = (practical["mse"] - optimal["mse"]) / optimal["mse"] * 100
    assert practical["delta_mse"] == pytest.approx(expected)


def test_rerun_is_byte_identical(tmp_path):
    """Test two runs of one config produce identical reports and summaries."""
    extra = 'strategy = ["gd_practical", "proceed"]\nsave_traces = true\n'
    assert _run(tmp_path, extra, "first", "run")[0] == 0
    assert _run(tmp_path, extra, "second", "run")[0] == 0
    names = [
        "synthetic_mlp_gd_practical_none_H4_seed0.json",
        "synthetic_mlp_proceed_none_H4_seed0.json",
        "synthetic_mlp_proceed_none_H4_seed0_trace.csv",
        "summary.csv",
    ]
    for name in names:
        with open(tmp_path / "first" / name, "rb") as a, open(tmp_path / "second" / name, "rb") as b:
            assert a.read() == b.read(), name


def test_reuse_checkpoints_gives_same_reports(tmp_path):
    """Test a rerun from saved checkpoints reproduces the reports."""
    extra = 'strategy = ["proceed"]\n'
    _, out_dir = _run(tmp_path, extra, "out", "run")
    report = os.path.join(out_dir, "synthetic_mlp_proceed_none_H4_seed0.json")
    with open(report, "rb") as f:
        first = f.read()
    assert _run(tmp_path, extra, "out", "run", "--reuse-checkpoints")[0] == 0
    with open(report, "rb") as f:
        assert f.read() == first


def test_pretrain_then_train_adapter(tmp_path):
    """Test the split pipeline writes pretrained and adapter checkpoints."""
    extra = 'strategy = ["gd_practical", "concept_only"]\n'
    assert _run(tmp_path, extra, "out", "pretrain")[0] == 0
    assert _run(tmp_path, extra, "out", "train-adapter")[0] == 0
    ckpts = sorted(os.listdir(tmp_path / "out" / "checkpoints"))
    assert ckpts == [
        "synthetic_mlp_H4_seed0.pretrained.ckpt.json",
        "synthetic_mlp_concept_only_H4_seed0.adapter.ckpt.json",
    ]


def test_train_adapter_without_pretraining(tmp_path):
    """Test a missing pretrained checkpoint is a data error."""
    assert _run(tmp_path, 'strategy = ["proceed"]\n', "out", "train-adapter")[0] == 3


def test_synth_gen_writes_loadable_csv(tmp_path):
    """Test the generated CSV loads back with its regime labels."""
    code, out_dir = _run(tmp_path, "", "data", "synth-gen")
    assert code == 0
    table = pd.read_csv(os.path.join(out_dir, "synthetic.csv"))
    assert list(table.columns) == ["date", "v0", "v1"]
    assert len(table) == 400
    regimes = pd.read_csv(os.path.join(out_dir, "synthetic_regimes.csv"))
    assert list(regimes.columns) == ["t", "regime"]
    assert regimes["regime"].iloc[0] == 0 and regimes["regime"].iloc[50] == 1

    csv_config = (
        f'dataset = "recurring"\ncsv_path = "{os.path.join(out_dir, "synthetic.csv")}"\nstrategy = ["frozen"]\n'
    )
    assert _run(tmp_path, csv_config, "csv_out", "run")[0] == 0
    assert os.path.exists(tmp_path / "csv_out" / "recurring_mlp_frozen_none_H4_seed0.json")


def test_export_drift(tmp_path):
    """Test drift export writes three rows per online forecast."""
    extra = 'strategy = ["proceed"]\n'
    _, out_dir = _run(tmp_path, extra, "out", "run")
    checkpoint = os.path.join(out_dir, "checkpoints", "synthetic_mlp_proceed_H4_seed0.adapter.ckpt.json")
    code, _ = _run(tmp_path, extra, "out", "export-drift", "--checkpoint", checkpoint)
    assert code == 0
    table = pd.read_csv(os.path.join(out_dir, "synthetic_mlp_proceed_H4_seed0.adapter_drift.csv"))
    assert list(table.columns) == ["t", "kind", "c0", "c1", "c2", "c3"]
    assert len(table) == 3 * (400 - 4 - 200 + 1)
    assert set(table["kind"]) == {"concept_train", "concept_test", "drift"}


def test_report_rebuilds_summary(tmp_path):
    """Test the report command recreates the summary from report files."""
    _, out_dir = _run(tmp_path, 'strategy = ["frozen"]\n', "out", "run")
    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "rb") as f:
        original = f.read()
    os.remove(summary)
    assert _run(tmp_path, "", "out", "report")[0] == 0
    with open(summary, "rb") as f:
        assert f.read() == original


def test_config_and_data_errors(tmp_path):
    """Test bad or absent configs exit with 2 and missing data with 3."""
    assert _run(tmp_path, 'strategy = ["procede"]\n', "out", "run")[0] == 2
    assert _run(tmp_path, "horizn = [4]\n", "out", "run")[0] == 2
    assert main(["--config", str(tmp_path / "absent.env"), "run"]) == 2
    missing_csv = 'dataset = "etth1"\ncsv_path = "/nonexistent/etth1.csv"\n'
    assert _run(tmp_path, missing_csv, "out", "run")[0] == 3


def test_divergence_exits_with_numeric_code(tmp_path):
    """Test a blown-up pretraining marks the cell failed with exit status 4."""
    code, out_dir = _run(tmp_path, 'strategy = ["frozen"]\npretrain_lr = 1e300\n', "out", "run")
    assert code == 4
    with open(os.path.join(out_dir, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    assert not manifest["complete"]
    assert manifest["cells"][0]["status"] == "failed"
