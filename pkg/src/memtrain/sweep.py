"""Seeded experiment sweeps over algorithms, devices, and seeds.

A sweep plan is a list of runs (algorithm, device, seed, config overrides).
Each run trains in isolation and writes its own directory; a failing run is
recorded in the summary without disturbing its siblings. Reruns with the
same plan reproduce every output byte-for-byte.

Outputs under the sweep directory:

    summary.csv                 one row per run (status, totals)
    combined.csv                per-epoch rows for completed runs
    runs/<run_id>/config.json   resolved run configuration
    runs/<run_id>/epochs.jsonl  full EpochReports, one JSON object per line
    runs/<run_id>/epochs.csv    epoch,accuracy,pulses_ltp,pulses_ltd,energy_j

`report` turns a completed sweep into tidy plot-ready tables.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .characterization import import_model
from .dataset import Dataset, resolve_dataset
from .device_model import (
    DeviceModel,
    analytic_symmetry_point,
    synthetic_device_family,
)
from .errors import ConfigError, IoError, MemtrainError, MissingRuns, SchemaError
from .trainers import ALGORITHMS, NetworkConfig, train_network

__all__ = [
    "EPOCH_CSV_HEADER",
    "RunSpec",
    "SweepPlan",
    "load_plan",
    "report",
    "resolve_device",
    "run_sweep",
]

EPOCH_CSV_HEADER = ("epoch", "accuracy", "pulses_ltp", "pulses_ltd", "energy_j")

_SUMMARY_HEADER = (
    "run_id",
    "algorithm",
    "device",
    "seed",
    "dtd_sigma",
    "status",
    "epochs",
    "final_accuracy",
    "total_pulses_ltp",
    "total_pulses_ltd",
    "total_energy_j",
    "error",
)


# ---------------------------------------------------------------------------
# plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunSpec:
    """One training run: algorithm, device, seed, and config overrides.

    `device` is either a bundled pulse-width key ("20ns", "1us", "0.2ms",
    "2ms") or a path to a fitted device-model JSON file. `dtd_sigma` sets
    device-to-device variation; None keeps whatever the model file carries.
    """

    algorithm: str
    device: str
    seed: int
    dtd_sigma: float | None = None
    overrides: dict = field(default_factory=dict)

    def resolved_config(self) -> dict:
        """Full network config (defaults + overrides) as a plain dict."""
        base = dataclasses.asdict(NetworkConfig())
        unknown = sorted(set(self.overrides) - set(base))
        if unknown:
            raise ConfigError(f"unknown config overrides: {', '.join(unknown)}")
        base.update(self.overrides)
        base["layer_sizes"] = [int(s) for s in base["layer_sizes"]]
        return base

    def run_id(self) -> str:
        """Content hash of everything that determines the run's outputs."""
        doc = {
            "algorithm": self.algorithm,
            "device": self.device,
            "seed": self.seed,
            "dtd_sigma": self.dtd_sigma,
            "config": self.resolved_config(),
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class SweepPlan:
    """A non-empty list of runs with distinct identifiers."""

    runs: tuple[RunSpec, ...]
    data_dir: str | None = None

    def validate(self) -> None:
        if not self.runs:
            raise ConfigError("sweep plan has no runs")
        ids = {}
        for spec in self.runs:
            if spec.algorithm not in ALGORITHMS:
                raise ConfigError(
                    f"unknown algorithm {spec.algorithm!r}; valid: {ALGORITHMS}"
                )
            if int(spec.seed) != spec.seed:
                raise ConfigError(f"seed must be an integer, got {spec.seed!r}")
            rid = spec.run_id()
            if rid in ids:
                raise ConfigError(
                    f"duplicate run (same algorithm/device/seed/config): {rid}"
                )
            ids[rid] = spec

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepPlan":
        if not isinstance(doc, dict) or "runs" not in doc:
            raise SchemaError("sweep plan must be an object with a 'runs' list")
        runs = []
        for i, row in enumerate(doc["runs"]):
            if not isinstance(row, dict):
                raise SchemaError(f"runs[{i}] must be an object")
            extra = set(row) - {"algorithm", "device", "seed", "dtd_sigma", "overrides"}
            if extra:
                raise SchemaError(f"runs[{i}] has unknown fields: {sorted(extra)}")
            try:
                runs.append(
                    RunSpec(
                        algorithm=str(row["algorithm"]),
                        device=str(row["device"]),
                        seed=int(row["seed"]),
                        dtd_sigma=(
                            None if row.get("dtd_sigma") is None
                            else float(row["dtd_sigma"])
                        ),
                        overrides=dict(row.get("overrides", {})),
                    )
                )
            except KeyError as exc:
                raise SchemaError(f"runs[{i}] is missing {exc}") from exc
        plan = cls(runs=tuple(runs), data_dir=doc.get("data_dir"))
        plan.validate()
        return plan


def load_plan(path) -> SweepPlan:
    """Read a sweep plan from a JSON or TOML file (by extension)."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".toml":
        doc = tomllib.loads(text.decode("utf-8"))
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    return SweepPlan.from_dict(doc)


def resolve_device(device: str, dtd_sigma: float | None) -> DeviceModel:
    """Turn a device reference (family key or model JSON path) into a model.

    dtd_sigma=None keeps the device's own variation (the bundled family
    default, or whatever a model file carries); a number overrides it.
    """
    looks_like_path = device.endswith(".json") or os.sep in device
    if not looks_like_path:
        if dtd_sigma is None:
            return synthetic_device_family(device)
        return synthetic_device_family(device, dtd_sigma=dtd_sigma)
    model = import_model(device)
    if dtd_sigma is not None and dtd_sigma != model.dtd_sigma:
        model = dataclasses.replace(model, dtd_sigma=dtd_sigma)
    return model


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _epoch_rows(reports):
    return [
        (r.epoch, repr(r.test_accuracy), r.pulses_ltp, r.pulses_ltd, repr(r.energy_j))
        for r in reports
    ]


def _run_one(spec: RunSpec, dataset: Dataset, run_dir: Path) -> dict:
    """Execute one run; never raises. Returns its summary row as a dict."""
    rid = spec.run_id()
    row = {
        "run_id": rid,
        "algorithm": spec.algorithm,
        "device": spec.device,
        "seed": spec.seed,
        "dtd_sigma": "" if spec.dtd_sigma is None else repr(spec.dtd_sigma),
        "status": "failed",
        "epochs": 0,
        "final_accuracy": "",
        "total_pulses_ltp": "",
        "total_pulses_ltd": "",
        "total_energy_j": "",
        "error": "",
        "_reports": None,
    }
    try:
        model = resolve_device(spec.device, spec.dtd_sigma)
        config = NetworkConfig.from_dict(spec.resolved_config())
        result = train_network(config, model, spec.algorithm, spec.seed, dataset)
        reports = result.reports
        run_dir.mkdir(parents=True, exist_ok=True)
        _write_json(
            run_dir / "config.json",
            {
                "run_id": rid,
                "algorithm": spec.algorithm,
                "device": spec.device,
                "seed": spec.seed,
                "dtd_sigma": spec.dtd_sigma,
                "config": spec.resolved_config(),
            },
        )
        with open(run_dir / "epochs.jsonl", "w", encoding="utf-8") as fh:
            for r in reports:
                fh.write(json.dumps(r.to_dict(), sort_keys=True))
                fh.write("\n")
        _write_csv(run_dir / "epochs.csv", EPOCH_CSV_HEADER, _epoch_rows(reports))
        row.update(
            status="completed",
            epochs=len(reports),
            final_accuracy=repr(reports[-1].test_accuracy) if reports else "",
            total_pulses_ltp=sum(r.pulses_ltp for r in reports),
            total_pulses_ltd=sum(r.pulses_ltd for r in reports),
            total_energy_j=repr(sum(r.energy_j for r in reports)),
            _reports=reports,
        )
    except Exception as exc:  # crash isolation: record, never propagate
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(
    plan: SweepPlan,
    out_dir,
    jobs: int | None = None,
    dataset: Dataset | None = None,
) -> list[dict]:
    """Execute every run in the plan; return summary rows in plan order.

    Runs execute concurrently (each is internally single-threaded and
    self-seeded, so concurrency does not affect results). summary.csv and
    combined.csv land in out_dir; per-run files under out_dir/runs/.
    """
    plan.validate()
    if dataset is None:
        dataset = resolve_dataset(plan.data_dir)
    out = Path(out_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)

    workers = jobs or min(len(plan.runs), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(
            pool.map(
                lambda spec: _run_one(spec, dataset, out / "runs" / spec.run_id()),
                plan.runs,
            )
        )

    _write_csv(
        out / "summary.csv",
        _SUMMARY_HEADER,
        [[row[k] for k in _SUMMARY_HEADER] for row in rows],
    )
    combined = []
    for row in rows:
        if row["status"] == "completed":
            for er in _epoch_rows(row["_reports"]):
                combined.append((row["run_id"], *er))
    _write_csv(out / "combined.csv", ("run_id", *EPOCH_CSV_HEADER), combined)
    for row in rows:
        row.pop("_reports")
    return rows


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def _load_summary(out: Path) -> list[dict]:
    path = out / "summary.csv"
    if not path.exists():
        raise MissingRuns(f"no summary.csv under {out}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    done = [r for r in rows if r["status"] == "completed"]
    if not done:
        raise MissingRuns(f"no completed runs recorded in {path}")
    return done


def report(out_dir, dest_dir=None) -> dict[str, Path]:
    """Emit plot-ready CSVs from a finished sweep directory.

    Returns {table name: path} for: accuracy_vs_epoch, accuracy_vs_energy,
    final_accuracy_vs_symmetry_point, weight_histograms.
    """
    out = Path(out_dir)
    dest = Path(dest_dir) if dest_dir is not None else out
    dest.mkdir(parents=True, exist_ok=True)
    done = _load_summary(out)

    key_cols = ("run_id", "algorithm", "device", "seed")
    acc_rows, energy_rows, sym_rows, hist_rows = [], [], [], []
    for row in done:
        keys = tuple(row[c] for c in key_cols)
        run_dir = out / "runs" / row["run_id"]
        with open(run_dir / "epochs.jsonl", encoding="utf-8") as fh:
            reports = [json.loads(line) for line in fh if line.strip()]
        cum_e = 0.0
        for rep in reports:
            acc_rows.append((*keys, rep["epoch"], repr(rep["test_accuracy"])))
            cum_e += rep["energy_j"]
            energy_rows.append(
                (*keys, rep["epoch"], repr(cum_e), repr(rep["test_accuracy"]))
            )
        try:
            sigma = float(row["dtd_sigma"]) if row["dtd_sigma"] else None
            g_star = repr(analytic_symmetry_point(resolve_device(row["device"], sigma)))
        except MemtrainError:
            g_star = ""
        sym_rows.append((*keys, g_star, row["final_accuracy"]))
        if reports:
            for layer, hist in enumerate(reports[-1]["weight_hist"]):
                edges, counts = hist["edges"], hist["counts"]
                for b, count in enumerate(counts):
                    hist_rows.append(
                        (*keys, layer, repr(edges[b]), repr(edges[b + 1]), count)
                    )

    tables = {
        "accuracy_vs_epoch": (("*k", "epoch", "accuracy"), acc_rows),
        "accuracy_vs_energy": (
            ("*k", "epoch", "cumulative_energy_j", "accuracy"),
            energy_rows,
        ),
        "final_accuracy_vs_symmetry_point": (
            ("*k", "symmetry_point", "final_accuracy"),
            sym_rows,
        ),
        "weight_histograms": (
            ("*k", "layer", "bin_left", "bin_right", "count"),
            hist_rows,
        ),
    }
    paths = {}
    for name, (header, rows) in tables.items():
        full_header = key_cols + tuple(h for h in header if h != "*k")
        path = dest / f"{name}.csv"
        _write_csv(path, full_header, rows)
        paths[name] = path
    return paths
