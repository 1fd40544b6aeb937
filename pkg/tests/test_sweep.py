"""Sweep plans, isolated execution, output schemas, and report tables."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from memtrain.characterization import export_model
from memtrain.dataset import Dataset
from memtrain.device_model import analytic_symmetry_point, synthetic_device_family
from memtrain.errors import (
    ConfigError,
    MissingRuns,
    SchemaError,
    UnknownPulseWidth,
)
from memtrain.sweep import (
    EPOCH_CSV_HEADER,
    RunSpec,
    SweepPlan,
    load_plan,
    report,
    resolve_device,
    run_sweep,
)


def toy_dataset(seed=0, n_train=60, n_test=40, pixels=12, classes=3) -> Dataset:
    rng = np.random.default_rng(seed)
    means = rng.choice([0.15, 0.85], size=(classes, pixels))

    def draw(n):
        labels = rng.integers(0, classes, size=n)
        images = np.clip(means[labels] + rng.normal(0, 0.08, (n, pixels)), 0, 1)
        return images, labels

    tr_x, tr_y = draw(n_train)
    te_x, te_y = draw(n_test)
    return Dataset(tr_x, tr_y, te_x, te_y)


TOY_OVERRIDES = {"layer_sizes": [12, 8, 3], "epochs": 2, "histogram_bins": 8}


def toy_plan(*specs) -> SweepPlan:
    return SweepPlan(runs=tuple(specs))


def spec(algorithm="digital_baseline", device="2ms", seed=1, sigma=None, **extra):
    overrides = dict(TOY_OVERRIDES)
    overrides.update(extra)
    return RunSpec(algorithm, device, seed, dtd_sigma=sigma, overrides=overrides)


# ---------------------------------------------------------------------------
# specs and plans
# ---------------------------------------------------------------------------

def test_run_id_is_stable_and_content_addressed():
    a = spec(seed=1)
    assert a.run_id() == spec(seed=1).run_id()
    assert len(a.run_id()) == 12
    assert int(a.run_id(), 16) >= 0
    assert a.run_id() != spec(seed=2).run_id()
    assert a.run_id() != spec(seed=1, lr=0.2).run_id()
    assert a.run_id() != spec(seed=1, sigma=0.05).run_id()


def test_unknown_override_rejected():
    with pytest.raises(ConfigError, match="unknown config overrides"):
        spec(bogus_knob=3).resolved_config()


def test_plan_rejects_empty_and_duplicates():
    with pytest.raises(ConfigError, match="no runs"):
        toy_plan().validate()
    with pytest.raises(ConfigError, match="duplicate"):
        toy_plan(spec(seed=1), spec(seed=1)).validate()


def test_plan_rejects_unknown_algorithm():
    with pytest.raises(ConfigError, match="unknown algorithm"):
        toy_plan(spec(algorithm="adamw")).validate()


def test_plan_from_dict_rejects_bad_rows():
    with pytest.raises(SchemaError, match="runs"):
        SweepPlan.from_dict({"not_runs": []})
    with pytest.raises(SchemaError, match="unknown fields"):
        SweepPlan.from_dict(
            {"runs": [{"algorithm": "plain", "device": "2ms", "seed": 1, "extra": 2}]}
        )
    with pytest.raises(SchemaError, match="missing"):
        SweepPlan.from_dict({"runs": [{"algorithm": "plain"}]})


def test_load_plan_toml_and_json_agree(tmp_path):
    doc = {
        "runs": [
            {
                "algorithm": "plain",
                "device": "1us",
                "seed": 3,
                "dtd_sigma": 0.05,
                "overrides": {"epochs": 1, "lr": 0.2},
            }
        ]
    }
    jpath = tmp_path / "plan.json"
    jpath.write_text(json.dumps(doc))
    tpath = tmp_path / "plan.toml"
    tpath.write_text(
        '[[runs]]\nalgorithm = "plain"\ndevice = "1us"\nseed = 3\ndtd_sigma = 0.05\n'
        "[runs.overrides]\nepochs = 1\nlr = 0.2\n"
    )
    assert load_plan(jpath) == load_plan(tpath)


def test_load_plan_bad_json(tmp_path):
    path = tmp_path / "plan.json"
    path.write_text("{nope")
    with pytest.raises(SchemaError):
        load_plan(path)


# ---------------------------------------------------------------------------
# device resolution
# ---------------------------------------------------------------------------

def test_resolve_device_family_key_and_sigma():
    assert resolve_device("2ms", 0.12).dtd_sigma == 0.12
    assert resolve_device("2ms", 0.0).dtd_sigma == 0.0
    # None keeps the family's own default variation
    assert resolve_device("2ms", None).dtd_sigma == synthetic_device_family("2ms").dtd_sigma
    with pytest.raises(UnknownPulseWidth):
        resolve_device("17ns", None)


def test_resolve_device_model_path(tmp_path):
    base = synthetic_device_family("1us", dtd_sigma=0.03)
    path = tmp_path / "dev.json"
    export_model(base, path)
    loaded = resolve_device(str(path), None)
    assert loaded.ltp_coeffs == base.ltp_coeffs
    # None keeps whatever the file carries
    assert loaded.dtd_sigma == 0.03
    # explicit sigma overrides whatever the file carries
    assert resolve_device(str(path), 0.08).dtd_sigma == 0.08
    assert resolve_device(str(path), 0.0).dtd_sigma == 0.0


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def finished_sweep(tmp_path_factory):
    """One sweep with two good runs and one doomed run, executed once."""
    out = tmp_path_factory.mktemp("sweep")
    plan = toy_plan(
        spec(algorithm="digital_baseline", seed=1),
        spec(algorithm="mixed_precision", device="2ms", seed=1),
        spec(algorithm="mixed_precision", device="missing/model.json", seed=1),
    )
    rows = run_sweep(plan, out, dataset=toy_dataset())
    return out, plan, rows


def test_sweep_isolates_failures(finished_sweep):
    _, _, rows = finished_sweep
    statuses = [r["status"] for r in rows]
    assert statuses == ["completed", "completed", "failed"]
    assert "IoError" in rows[2]["error"]
    assert rows[0]["final_accuracy"] != ""


def test_sweep_writes_per_run_files(finished_sweep):
    out, plan, rows = finished_sweep
    for row in rows[:2]:
        run_dir = out / "runs" / row["run_id"]
        assert (run_dir / "config.json").exists()
        assert (run_dir / "epochs.jsonl").exists()
        with open(run_dir / "epochs.csv", newline="") as fh:
            reader = csv.reader(fh)
            assert tuple(next(reader)) == EPOCH_CSV_HEADER
            assert len(list(reader)) == 2  # epochs
    assert not (out / "runs" / rows[2]["run_id"]).exists()


def test_sweep_summary_and_combined_schema(finished_sweep):
    out, _, rows = finished_sweep
    with open(out / "summary.csv", newline="") as fh:
        records = list(csv.DictReader(fh))
    assert [r["status"] for r in records] == ["completed", "completed", "failed"]
    pulses = int(records[1]["total_pulses_ltp"]) + int(records[1]["total_pulses_ltd"])
    assert pulses > 0
    with open(out / "combined.csv", newline="") as fh:
        reader = csv.reader(fh)
        assert next(reader) == ["run_id", *EPOCH_CSV_HEADER]
        body = list(reader)
    assert len(body) == 4  # 2 completed runs x 2 epochs
    assert {r[0] for r in body} == {rows[0]["run_id"], rows[1]["run_id"]}


def test_sweep_matches_direct_training(finished_sweep):
    """The sweep's JSONL agrees with running the same config directly."""
    out, plan, rows = finished_sweep
    from memtrain.trainers import NetworkConfig, train_network

    run_dir = out / "runs" / rows[1]["run_id"]
    with open(run_dir / "epochs.jsonl") as fh:
        stored = [json.loads(line) for line in fh]
    result = train_network(
        NetworkConfig.from_dict(plan.runs[1].resolved_config()),
        synthetic_device_family("2ms"),
        "mixed_precision",
        1,
        toy_dataset(),
    )
    assert [r.to_dict() for r in result.reports] == stored


def test_sweep_reruns_are_byte_identical(tmp_path):
    plan = toy_plan(
        spec(algorithm="plain", device="1us", seed=5),
        spec(algorithm="symmetry_shifted", device="20ns", seed=5, sigma=0.05),
    )
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        run_sweep(plan, d, dataset=toy_dataset())
        report(d)
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (dirs[0] / rel).read_bytes() == (dirs[1] / rel).read_bytes(), rel


# ---------------------------------------------------------------------------
# report tables
# ---------------------------------------------------------------------------

def test_report_missing_dir(tmp_path):
    with pytest.raises(MissingRuns):
        report(tmp_path)


def test_report_requires_a_completed_run(tmp_path):
    plan = toy_plan(spec(device="missing/model.json"))
    run_sweep(plan, tmp_path, dataset=toy_dataset())
    with pytest.raises(MissingRuns):
        report(tmp_path)


def test_report_tables(finished_sweep):
    out, plan, rows = finished_sweep
    paths = report(out)
    assert set(paths) == {
        "accuracy_vs_epoch",
        "accuracy_vs_energy",
        "final_accuracy_vs_symmetry_point",
        "weight_histograms",
    }

    with open(paths["accuracy_vs_epoch"], newline="") as fh:
        acc = list(csv.DictReader(fh))
    assert len(acc) == 4
    assert {r["run_id"] for r in acc} == {rows[0]["run_id"], rows[1]["run_id"]}

    with open(paths["accuracy_vs_energy"], newline="") as fh:
        nrg = list(csv.DictReader(fh))
    for row in nrg:  # cumulative energy is non-decreasing within a run
        assert float(row["cumulative_energy_j"]) >= 0.0
    mp_rows = [r for r in nrg if r["run_id"] == rows[1]["run_id"]]
    cum = [float(r["cumulative_energy_j"]) for r in mp_rows]
    assert cum == sorted(cum) and cum[-1] > 0.0

    with open(paths["final_accuracy_vs_symmetry_point"], newline="") as fh:
        sym = {r["run_id"]: r for r in csv.DictReader(fh)}
    g_star = float(sym[rows[1]["run_id"]]["symmetry_point"])
    assert g_star == pytest.approx(
        analytic_symmetry_point(synthetic_device_family("2ms")), abs=1e-12
    )

    with open(paths["weight_histograms"], newline="") as fh:
        hist = list(csv.DictReader(fh))
    # counts per run and layer add up to the layer's synapse count
    for rid in (rows[0]["run_id"], rows[1]["run_id"]):
        for layer, (rows_n, cols_n) in enumerate([(12, 8), (8, 3)]):
            total = sum(
                int(r["count"])
                for r in hist
                if r["run_id"] == rid and int(r["layer"]) == layer
            )
            assert total == rows_n * cols_n


def test_report_to_separate_destination(finished_sweep, tmp_path):
    out, _, _ = finished_sweep
    paths = report(out, dest_dir=tmp_path)
    assert all(p.parent == tmp_path for p in paths.values())
    assert all(p.exists() for p in paths.values())
