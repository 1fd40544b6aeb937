"""End-to-end tests for the command-line interface.

Each test drives ``memtrain.cli.main`` with an argv list and checks exit
codes, printed output, and files left on disk — the same surface a shell
user sees.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from memtrain.characterization import (
    import_model,
    synthetic_trace,
    write_measurements,
)
from memtrain.cli import build_parser, main
from memtrain.dataset import DATA_DIR_ENV
from memtrain.device_model import analytic_symmetry_point, synthetic_device_family
from memtrain.energy import SchottkyParams, pulse_energy, schottky_current
from memtrain.device_model import POTENTIATE, PulseSpec


# ---------------------------------------------------------------------------
# parser basics
# ---------------------------------------------------------------------------

def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_every_subcommand_is_registered():
    parser = build_parser()
    text = parser.format_help()
    for name in ("fit", "symmetry", "energy", "train", "sweep", "report", "fetch-mnist"):
        assert name in text


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def test_energy_output_matches_library(capsys):
    assert main(["energy", "--v", "2.0", "--t", "2e-3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    printed_current = float(lines[0].split(":")[1].split()[0])
    printed_energy = float(lines[1].split(":")[1].split()[0])
    assert printed_current == schottky_current(2.0, SchottkyParams())
    assert printed_energy == pulse_energy(PulseSpec(2.0, 2e-3, POTENTIATE), SchottkyParams())


def test_energy_respects_area_override(capsys):
    assert main(["energy", "--v", "1.5", "--t", "1e-6", "--area", "1.0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    printed_current = float(lines[0].split(":")[1].split()[0])
    assert printed_current == schottky_current(1.5, SchottkyParams(area_um2=1.0))


def test_energy_negative_voltage_exits_1(capsys):
    assert main(["energy", "--v", "-1.0", "--t", "1e-6"]) == 1
    assert capsys.readouterr().err.startswith("error:")


# ---------------------------------------------------------------------------
# symmetry
# ---------------------------------------------------------------------------

def test_symmetry_family_key_writes_trace(tmp_path, capsys):
    trace_path = tmp_path / "trace.csv"
    rc = main([
        "symmetry", "--model", "2ms", "--tol", "1e-7", "--trace", str(trace_path),
    ])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    protocol = float(lines[0].split(":")[1])
    analytic = float(lines[1].split(":")[1])
    pulses = int(lines[2].split(":")[1])
    assert analytic == analytic_symmetry_point(synthetic_device_family("2ms"))
    assert abs(protocol - analytic) <= 1e-4
    rows = trace_path.read_text(encoding="utf-8").splitlines()
    assert rows[0] == "pulse,g"
    assert len(rows) == pulses + 2  # header + initial state + one row per pulse
    # the trace ends mid-pair, so the tail sits within one pulse of the answer
    tail = float(rows[-1].split(",")[1])
    assert abs(tail - protocol) < 0.05
    assert all(0.0 <= float(r.split(",")[1]) <= 1.0 for r in rows[1:])


def test_symmetry_unknown_key_exits_1(capsys):
    assert main(["symmetry", "--model", "17ns"]) == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def test_fit_recovers_symmetry_point_from_clean_trace(tmp_path, capsys):
    base = synthetic_device_family("1us", dtd_sigma=0.0)
    series = synthetic_trace(base, pulses_per_branch=200)
    csv_path = tmp_path / "meas.csv"
    write_measurements(series, csv_path)

    out_path = tmp_path / "fitted.json"
    rc = main([
        "fit", "--input", str(csv_path),
        "--v-write", "3.3", "--t-write", "1e-6",
        "--out", str(out_path),
    ])
    assert rc == 0
    assert "rms residual" in capsys.readouterr().out

    fitted = import_model(out_path)
    assert fitted.g_min < fitted.g_max
    assert abs(
        analytic_symmetry_point(fitted) - analytic_symmetry_point(base)
    ) < 1e-6


def test_fit_missing_input_exits_1(tmp_path, capsys):
    rc = main([
        "fit", "--input", str(tmp_path / "nope.csv"),
        "--v-write", "3.3", "--t-write", "1e-6",
        "--out", str(tmp_path / "m.json"),
    ])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TINY_NET = {"layer_sizes": [784, 8, 10], "epochs": 1, "histogram_bins": 8}


def write_config(path: Path, **fields) -> Path:
    doc = dict(TINY_NET, **fields)
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_train_single_epoch_prints_report(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)
    cfg = write_config(tmp_path / "run.json", algorithm="digital_baseline", seed=3)
    out_dir = tmp_path / "out"
    assert main(["train", "--config", str(cfg), "--out", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "epoch   1" in out
    final = float(out.splitlines()[-1].split(":")[1])
    assert final > 0.3  # one epoch of a tiny net still beats chance easily
    assert (out_dir / "epochs.csv").is_file()
    assert (out_dir / "epochs.jsonl").is_file()
    assert (out_dir / "config.json").is_file()


def test_train_accepts_toml_config(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        'algorithm = "digital_baseline"\n'
        "seed = 3\n"
        "epochs = 1\n"
        "layer_sizes = [784, 8, 10]\n"
        "histogram_bins = 8\n",
        encoding="utf-8",
    )
    assert main(["train", "--config", str(cfg)]) == 0
    assert "final accuracy:" in capsys.readouterr().out


def test_train_missing_algorithm_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json", seed=0)
    assert main(["train", "--config", str(cfg)]) == 1
    assert "algorithm" in capsys.readouterr().err


def test_train_unknown_algorithm_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json", algorithm="adam", seed=0)
    assert main(["train", "--config", str(cfg)]) == 1
    assert "adam" in capsys.readouterr().err


def test_train_failed_run_exits_1(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)
    cfg = write_config(
        tmp_path / "run.json",
        algorithm="mixed_precision",
        device=str(tmp_path / "missing.json"),
        seed=0,
    )
    assert main(["train", "--config", str(cfg)]) == 1
    assert "run failed:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# sweep + report
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def cli_sweep(tmp_path_factory):
    """One CLI-driven sweep holding a good run and a doomed run."""
    root = tmp_path_factory.mktemp("cli_sweep")
    plan = {
        "runs": [
            {
                "algorithm": "digital_baseline",
                "device": "2ms",
                "seed": 1,
                "overrides": TINY_NET,
            },
            {
                "algorithm": "mixed_precision",
                "device": str(root / "missing.json"),
                "seed": 1,
                "overrides": TINY_NET,
            },
        ]
    }
    plan_path = root / "plan.json"
    plan_path.write_text(json.dumps(plan), encoding="utf-8")
    out_dir = root / "out"
    rc = main(["sweep", "--plan", str(plan_path), "--out", str(out_dir)])
    return rc, out_dir


def test_sweep_with_failures_exits_1(cli_sweep, capsys):
    rc, out_dir = cli_sweep
    assert rc == 1
    assert (out_dir / "summary.csv").is_file()
    assert (out_dir / "combined.csv").is_file()


def test_sweep_all_green_exits_0(tmp_path, capsys):
    plan = {
        "runs": [
            {
                "algorithm": "digital_baseline",
                "device": "2ms",
                "seed": 5,
                "overrides": TINY_NET,
            }
        ]
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan), encoding="utf-8")
    assert main(["sweep", "--plan", str(plan_path), "--out", str(tmp_path / "out")]) == 0
    out = capsys.readouterr().out
    assert "1/1 runs completed" in out


def test_sweep_missing_plan_exits_1(tmp_path, capsys):
    rc = main(["sweep", "--plan", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_report_cli_writes_tables(cli_sweep, tmp_path, capsys):
    _, out_dir = cli_sweep
    dest = tmp_path / "tables"
    assert main(["report", "--dir", str(out_dir), "--dest", str(dest)]) == 0
    printed = capsys.readouterr().out
    for name in (
        "accuracy_vs_epoch",
        "accuracy_vs_energy",
        "final_accuracy_vs_symmetry_point",
        "weight_histograms",
    ):
        assert name in printed
        assert (dest / f"{name}.csv").is_file()


def test_report_cli_empty_dir_exits_1(tmp_path, capsys):
    assert main(["report", "--dir", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error:")


# ---------------------------------------------------------------------------
# fetch-mnist (stubbed: no network in tests)
# ---------------------------------------------------------------------------

def test_fetch_mnist_reports_paths_and_env_hint(tmp_path, capsys, monkeypatch):
    import memtrain.cli as cli_mod

    def fake_fetch(dest):
        return {"train_images": Path(dest) / "train-images-idx3-ubyte.gz"}

    monkeypatch.setattr(cli_mod, "fetch_mnist", fake_fetch)
    assert main(["fetch-mnist", "--dest", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "train_images" in out
    assert DATA_DIR_ENV in out
