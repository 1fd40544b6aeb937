"""Command-line interface.

Subcommands:

    fit         fit a device model from a pulsed-measurement CSV
    symmetry    locate a device's symmetry point (protocol + analytic)
    energy      per-pulse Schottky current and write energy at (v, t)
    train       run one training experiment from a config file
    sweep       run a multi-experiment sweep plan
    report      emit plot-ready CSV tables from a sweep directory
    fetch-mnist download the full dataset archives with checksum checks

All file outputs are UTF-8; errors exit with status 1 (argparse usage
errors exit 2). `sweep` exits 0 only if every run completed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .characterization import (
    export_model,
    find_symmetry_point_protocol,
    fit_gradients,
    import_model,
    load_measurements,
)
from .dataset import DATA_DIR_ENV, fetch_mnist, resolve_dataset
from .device_model import (
    DEPRESS,
    POTENTIATE,
    PulseSpec,
    analytic_symmetry_point,
    make_device_model,
)
from .energy import SchottkyParams, pulse_energy, schottky_current
from .errors import IoError, MemtrainError, SchemaError
from .sweep import RunSpec, load_plan, report, resolve_device, run_sweep
from .trainers import ALGORITHMS

__all__ = ["main"]


def _read_config_file(path: Path) -> dict:
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".toml":
        return tomllib.loads(text.decode("utf-8"))
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_fit(args) -> int:
    series = load_measurements(args.input)
    ltp, ltd, fit = fit_gradients(series, v_write=args.v_write, t_write=args.t_write)
    model = make_device_model(
        ltp,
        ltd,
        g_min=fit.g_lo,
        g_max=fit.g_hi,
        dtd_sigma=args.dtd_sigma,
        pulse_spec_ltp=PulseSpec(args.v_write, args.t_write, POTENTIATE),
        pulse_spec_ltd=PulseSpec(args.v_write, args.t_write, DEPRESS),
    )
    export_model(model, args.out)
    print(f"fitted {fit.n_samples_ltp} LTP / {fit.n_samples_ltd} LTD steps")
    print(f"rms residual: LTP {fit.rms_residual_ltp:.3e}, LTD {fit.rms_residual_ltd:.3e}")
    print(f"conductance window: [{fit.g_lo!r}, {fit.g_hi!r}] S")
    print(f"wrote {args.out}")
    return 0


def _cmd_symmetry(args) -> int:
    model = (
        import_model(args.model)
        if args.model.endswith(".json") or "/" in args.model
        else resolve_device(args.model, None)
    )
    g_star, trace = find_symmetry_point_protocol(
        model, n_prime=args.n_prime, tol=args.tol
    )
    print(f"symmetry point (protocol): {g_star!r}")
    print(f"symmetry point (analytic): {analytic_symmetry_point(model)!r}")
    print(f"pulses applied: {len(trace) - 1}")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("pulse,g\n")
            for i, g in enumerate(trace):
                fh.write(f"{i},{float(g)!r}\n")
        print(f"wrote {args.trace}")
    return 0


def _cmd_energy(args) -> int:
    params = SchottkyParams() if args.area is None else SchottkyParams(area_um2=args.area)
    current = schottky_current(args.v, params)
    energy = pulse_energy(PulseSpec(args.v, args.t, POTENTIATE), params)
    print(f"current at {args.v} V: {current!r} A")
    print(f"energy of one {args.t} s pulse: {energy!r} J")
    return 0


def _cmd_train(args) -> int:
    doc = _read_config_file(Path(args.config))
    if not isinstance(doc, dict):
        raise SchemaError(f"{args.config} must hold one config object")
    try:
        algorithm = doc.pop("algorithm")
    except KeyError:
        raise SchemaError(f"{args.config} is missing 'algorithm'") from None
    device = doc.pop("device", "2ms")
    seed = int(doc.pop("seed", 0))
    dtd_sigma = doc.pop("dtd_sigma", None)
    data_dir = args.data_dir or doc.pop("data_dir", None)
    spec = RunSpec(
        algorithm=algorithm,
        device=device,
        seed=seed,
        dtd_sigma=None if dtd_sigma is None else float(dtd_sigma),
        overrides=doc,
    )
    if algorithm not in ALGORITHMS:
        raise SchemaError(f"unknown algorithm {algorithm!r}; valid: {ALGORITHMS}")
    dataset = resolve_dataset(data_dir)

    import tempfile

    from .sweep import _run_one  # single runner shared with sweeps

    with tempfile.TemporaryDirectory() as scratch:
        out_dir = Path(args.out) if args.out else Path(scratch)
        row = _run_one(spec, dataset, out_dir)
        if row["status"] != "completed":
            print(f"run failed: {row['error']}", file=sys.stderr)
            return 1
        with open(out_dir / "epochs.csv", encoding="utf-8") as fh:
            next(fh)  # header
            for line in fh:
                epoch, acc, ltp, ltd, energy = line.rstrip("\n").split(",")
                print(
                    f"epoch {epoch:>3}: accuracy {float(acc):.4f}  "
                    f"pulses {int(ltp) + int(ltd):>9}  energy {float(energy):.4e} J"
                )
    print(f"final accuracy: {float(row['final_accuracy']):.4f}")
    return 0


def _cmd_sweep(args) -> int:
    plan = load_plan(args.plan)
    rows = run_sweep(plan, args.out, jobs=args.jobs)
    failed = [r for r in rows if r["status"] != "completed"]
    for r in rows:
        mark = "ok " if r["status"] == "completed" else "FAIL"
        extra = r["error"] if r["error"] else f"final {r['final_accuracy']}"
        print(f"{mark} {r['run_id']} {r['algorithm']}@{r['device']} seed {r['seed']}: {extra}")
    print(f"{len(rows) - len(failed)}/{len(rows)} runs completed -> {args.out}")
    return 1 if failed else 0


def _cmd_report(args) -> int:
    paths = report(args.dir, dest_dir=args.dest)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_fetch(args) -> int:
    paths = fetch_mnist(args.dest)
    for key, path in paths.items():
        print(f"{key}: {path}")
    print(f"set {DATA_DIR_ENV}={args.dest} to train on the full dataset")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memtrain",
        description="Crossbar training simulator: device fitting, pulsed SGD, energy accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a device model from a measurement CSV")
    p.add_argument("--input", required=True, help="measurement CSV")
    p.add_argument("--v-write", type=float, required=True, help="write amplitude, V")
    p.add_argument("--t-write", type=float, required=True, help="write duration, s")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--dtd-sigma", type=float, default=0.0,
                   help="device-to-device variation to record in the model")
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("symmetry", help="find a device's symmetry point")
    p.add_argument("--model", required=True,
                   help="model JSON path or bundled key (20ns, 1us, 0.2ms, 2ms)")
    p.add_argument("--n-prime", type=int, default=50, help="priming pulses per polarity")
    p.add_argument("--tol", type=float, default=1e-5, help="pair-settling tolerance")
    p.add_argument("--trace", help="optional CSV to write the pulse trace to")
    p.set_defaults(handler=_cmd_symmetry)

    p = sub.add_parser("energy", help="Schottky current and per-pulse energy")
    p.add_argument("--v", type=float, required=True, help="pulse amplitude, V")
    p.add_argument("--t", type=float, required=True, help="pulse duration, s")
    p.add_argument("--area", type=float, default=None, help="device area, um^2")
    p.set_defaults(handler=_cmd_energy)

    p = sub.add_parser("train", help="run one training experiment")
    p.add_argument("--config", required=True, help="TOML or JSON config file")
    p.add_argument("--out", help="directory for epochs.jsonl/epochs.csv")
    p.add_argument("--data-dir", help=f"dataset directory (default: ${DATA_DIR_ENV} or bundled subset)")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("sweep", help="run a sweep plan")
    p.add_argument("--plan", required=True, help="TOML or JSON sweep plan")
    p.add_argument("--out", required=True, help="sweep output directory")
    p.add_argument("--jobs", type=int, default=None, help="parallel runs")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("report", help="emit plot-ready tables from a sweep")
    p.add_argument("--dir", required=True, help="completed sweep directory")
    p.add_argument("--dest", default=None, help="where to write tables (default: --dir)")
    p.set_defaults(handler=_cmd_report)

    p = sub.add_parser("fetch-mnist", help="download the full dataset")
    p.add_argument("--dest", required=True, help="target directory")
    p.set_defaults(handler=_cmd_fetch)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except MemtrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
