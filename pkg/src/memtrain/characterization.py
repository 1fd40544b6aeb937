"""Turning pulse-response measurements into device models.

The expected input is a conductance trace measured while applying write
pulses: ramps of potentiation pulses and ramps of depression pulses, each
row holding the conductance read (at small read bias) after one pulse.
From consecutive reads within a ramp we get per-pulse conductance steps;
normalizing conductance to [0, 1] over the observed window and fitting a
degree-5 polynomial to step-vs-state gives the two update polynomials of a
DeviceModel.

CSV schema (exact header)::

    pulse_index,v_write_V,t_write_s,polarity,g_read_S

with polarity P (potentiate) or D (depress). Lines starting with '#' before
the header may carry ``key=value`` metadata (device_id, read_voltage_V).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .device_model import (
    DEPRESS,
    POTENTIATE,
    DeviceModel,
    DeviceState,
    PulseSpec,
    apply_pulses,
    make_device_model,
)
from .errors import (
    DegenerateRange,
    EmptySeries,
    InsufficientPoints,
    IoError,
    NoConvergence,
    ParseError,
    SchemaError,
    SchemaVersionMismatch,
)

CSV_HEADER = ["pulse_index", "v_write_V", "t_write_s", "polarity", "g_read_S"]

MODEL_SCHEMA_VERSION = 1

# Fewer reads than this in a polarity branch cannot support a degree-5 fit
# with any residual information left over.
_MIN_READS_PER_BRANCH = 7
_MIN_SAMPLES_PER_BRANCH = 6


@dataclass
class MeasurementSeries:
    """Parsed measurement rows (parallel arrays) plus file metadata."""

    pulse_index: np.ndarray  # int
    v_write: np.ndarray  # volts
    t_write: np.ndarray  # seconds
    polarity: np.ndarray  # 'P' / 'D' strings
    g_read: np.ndarray  # siemens
    device_id: str = "unknown"
    read_voltage_v: float = 0.1

    def __len__(self):
        return self.g_read.size


@dataclass
class FitReport:
    """Quality numbers for one fit_gradients call (normalized units)."""

    n_samples_ltp: int
    n_samples_ltd: int
    rms_residual_ltp: float
    rms_residual_ltd: float
    g_lo: float  # observed window, siemens
    g_hi: float


def load_measurements(path) -> MeasurementSeries:
    """Read and validate a measurement CSV."""
    meta: dict[str, str] = {}
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = None
        for raw in reader:
            if raw and raw[0].lstrip().startswith("#"):
                text = ",".join(raw).lstrip()[1:].strip()
                if "=" in text:
                    key, _, val = text.partition("=")
                    meta[key.strip()] = val.strip()
                continue
            header = [c.strip() for c in raw]
            break
        if header is None:
            raise EmptySeries(f"{path}: no header row")
        if header != CSV_HEADER:
            raise SchemaError(
                f"{path}: header {header!r} does not match required {CSV_HEADER!r}"
            )

        idx, volts, secs, pol, cond = [], [], [], [], []
        row_no = 0
        for raw in reader:
            if not raw or (raw[0].lstrip().startswith("#")):
                continue
            row_no += 1
            if len(raw) != 5:
                raise ParseError(f"expected 5 fields, got {len(raw)}", row=row_no)
            try:
                i = int(raw[0])
                v = float(raw[1])
                t = float(raw[2])
                g = float(raw[4])
            except ValueError as exc:
                raise ParseError(str(exc), row=row_no) from exc
            p = raw[3].strip()
            if p not in ("P", "D"):
                raise ParseError(f"polarity must be P or D, got {p!r}", row=row_no)
            if v <= 0 or t <= 0:
                raise ParseError(f"v_write/t_write must be positive, got {v}, {t}", row=row_no)
            if not math.isfinite(g) or g < 0:
                raise ParseError(f"g_read_S must be a finite non-negative number, got {g}", row=row_no)
            idx.append(i)
            volts.append(v)
            secs.append(t)
            pol.append(p)
            cond.append(g)

    if not cond:
        raise EmptySeries(f"{path}: no data rows")

    series = MeasurementSeries(
        np.array(idx, dtype=np.int64),
        np.array(volts, dtype=np.float64),
        np.array(secs, dtype=np.float64),
        np.array(pol, dtype="U1"),
        np.array(cond, dtype=np.float64),
        device_id=meta.get("device_id", "unknown"),
        read_voltage_v=float(meta.get("read_voltage_V", 0.1)),
    )
    _check_ramp_order(series)
    return series


def _ramp_slices(polarity: np.ndarray):
    """Maximal runs of constant polarity, in file order."""
    slices = []
    start = 0
    for k in range(1, polarity.size + 1):
        if k == polarity.size or polarity[k] != polarity[start]:
            slices.append((polarity[start], slice(start, k)))
            start = k
    return slices


def _check_ramp_order(series: MeasurementSeries):
    for _, sl in _ramp_slices(series.polarity):
        run = series.pulse_index[sl]
        if run.size > 1 and not np.all(np.diff(run) > 0):
            bad = sl.start + int(np.argmin(np.diff(run))) + 2  # 1-based data row
            raise ParseError("pulse_index must be strictly increasing within a ramp", row=bad)


def fit_gradients(
    series: MeasurementSeries,
    v_write: float | None = None,
    t_write: float | None = None,
    degree: int = 5,
):
    """Fit per-pulse update polynomials from a measurement series.

    Optionally restricts to rows whose write conditions match (v_write,
    t_write); a model is only meaningful at one operating point. Returns
    (ltp_coeffs, ltd_coeffs, FitReport) with coefficients constant-first on
    normalized conductance.

    Steps that terminate at the observed conductance extremes are dropped:
    a read pinned at the window edge measures saturation, not the update
    gradient.
    """
    keep = np.ones(len(series), dtype=bool)
    if v_write is not None:
        keep &= np.isclose(series.v_write, v_write, rtol=1e-9, atol=0.0)
    if t_write is not None:
        keep &= np.isclose(series.t_write, t_write, rtol=1e-9, atol=0.0)
    if not keep.any():
        raise EmptySeries("no rows match the requested operating point")

    pol = series.polarity[keep]
    g = series.g_read[keep]
    index = series.pulse_index[keep]

    g_lo = float(g.min())
    g_hi = float(g.max())
    span = g_hi - g_lo
    if span <= 0.0:
        raise DegenerateRange(f"conductance window is degenerate: all reads at {g_lo} S")

    # per-branch read counts (pre-exclusion)
    for tag, token in ((POTENTIATE, "P"), (DEPRESS, "D")):
        n = int((pol == token).sum())
        if n < _MIN_READS_PER_BRANCH:
            raise InsufficientPoints(
                f"{tag} branch has {n} reads; need at least {_MIN_READS_PER_BRANCH}"
            )

    x = {POTENTIATE: [], DEPRESS: []}
    y = {POTENTIATE: [], DEPRESS: []}
    for token, sl in _ramp_slices(pol):
        seg = g[sl]
        if seg.size < 2:
            continue
        start = (seg[:-1] - g_lo) / span
        step = np.diff(seg) / span
        if token == "P":
            ok = seg[1:] < g_hi  # drop steps clipped at the top
            x[POTENTIATE].append(start[ok])
            y[POTENTIATE].append(step[ok])
        else:
            ok = seg[1:] > g_lo  # drop steps clipped at the bottom
            x[DEPRESS].append(start[ok])
            y[DEPRESS].append(-step[ok])  # magnitude of the decrease

    coeffs = {}
    report = {}
    for tag in (POTENTIATE, DEPRESS):
        xs = np.concatenate(x[tag]) if x[tag] else np.empty(0)
        ys = np.concatenate(y[tag]) if y[tag] else np.empty(0)
        if xs.size < _MIN_SAMPLES_PER_BRANCH:
            raise InsufficientPoints(
                f"{tag} branch has {xs.size} usable steps after saturation "
                f"filtering; need at least {_MIN_SAMPLES_PER_BRANCH}"
            )
        coeffs[tag], report[tag] = _polyfit_normal(xs, ys, degree)

    fit_report = FitReport(
        n_samples_ltp=int(sum(a.size for a in x[POTENTIATE])),
        n_samples_ltd=int(sum(a.size for a in x[DEPRESS])),
        rms_residual_ltp=report[POTENTIATE],
        rms_residual_ltd=report[DEPRESS],
        g_lo=g_lo,
        g_hi=g_hi,
    )
    return coeffs[POTENTIATE], coeffs[DEPRESS], fit_report


def _polyfit_normal(x: np.ndarray, y: np.ndarray, degree: int):
    """Least squares via normal equations on the [-1, 1]-scaled domain.

    The raw Vandermonde on [0, 1] is poorly conditioned; mapping to
    u = 2x - 1 before forming V^T V keeps the solve well behaved at
    degree 5. Coefficients are mapped back to the x domain exactly.
    """
    u = 2.0 * x - 1.0
    v = np.vander(u, degree + 1, increasing=True)
    gram = v.T @ v
    rhs = v.T @ y
    cu = np.linalg.solve(gram, rhs)
    residual = v @ cu - y
    rms = float(np.sqrt(np.mean(residual**2))) if y.size else 0.0
    # recompose in x: p(u(x)) with u = 2x - 1
    px = Polynomial(cu, domain=[0.0, 1.0], window=[-1.0, 1.0]).convert(
        domain=[0.0, 1.0], window=[0.0, 1.0]
    )
    out = np.zeros(degree + 1)
    out[: px.coef.size] = px.coef
    return tuple(float(c) for c in out), rms


def find_symmetry_point_protocol(
    model: DeviceModel,
    n_prime: int = 50,
    max_cycles: int = 1000,
    tol: float = 1e-5,
    g_start: float = 0.5,
    ltp_scale: float = 1.0,
    ltd_scale: float = 1.0,
):
    """Locate the symmetry point the way it is done on hardware.

    Applies n_prime depression pulses, n_prime potentiation pulses, then
    alternating (depress, potentiate) pairs until the net movement over a
    pair drops below tol. Returns (g_star, trace) where the trace holds the
    conductance after every pulse and g_star is the state between the
    depression and potentiation halves of the converged pair — the same
    phase of the limit cycle that one-LTP-then-one-LTD fixes.

    Raises NoConvergence (carrying the best estimate and the trace) if the
    pair loop does not settle within max_cycles.
    """
    state = DeviceState(g=float(g_start), ltp_scale=ltp_scale, ltd_scale=ltd_scale)
    trace = [state.g]

    def pulse(s, polarity):
        out = apply_pulses(model, s, polarity, 1).state
        trace.append(out.g)
        return out

    for _ in range(n_prime):
        state = pulse(state, DEPRESS)
    for _ in range(n_prime):
        state = pulse(state, POTENTIATE)

    estimate = state.g  # post-ramp fallback
    for _ in range(max_cycles):
        before = state.g
        state = pulse(state, DEPRESS)
        mid = state.g
        state = pulse(state, POTENTIATE)
        estimate = mid
        if abs(state.g - before) < tol:
            return mid, np.array(trace)

    raise NoConvergence(
        f"pair loop did not settle within {max_cycles} cycles (tol={tol})",
        estimate=estimate,
        trace=np.array(trace),
    )


def synthetic_trace(
    model: DeviceModel,
    pulses_per_branch: int = 200,
    g_start: float = 0.0,
    noise_sigma_s: float = 0.0,
    seed: int = 0,
) -> MeasurementSeries:
    """Simulate the measurement protocol on a model: one LTP ramp up, one
    LTD ramp down, reads in siemens. Handy for demos and for exercising the
    fitting pipeline end to end."""
    rng = np.random.default_rng(seed)
    span = model.g_max - model.g_min

    rows_idx, rows_pol, rows_g = [], [], []

    def record(ramp_idx, token, g_norm):
        rows_idx.append(ramp_idx)
        rows_pol.append(token)
        g_s = model.g_min + g_norm * span
        if noise_sigma_s > 0.0:
            g_s += rng.normal(0.0, noise_sigma_s)
        rows_g.append(max(g_s, 0.0))

    state = DeviceState(g=float(g_start))
    record(0, "P", state.g)
    for k in range(pulses_per_branch):
        state = apply_pulses(model, state, POTENTIATE, 1).state
        record(k + 1, "P", state.g)
        if state.g >= 1.0:
            break
    record(0, "D", state.g)
    for k in range(pulses_per_branch):
        state = apply_pulses(model, state, DEPRESS, 1).state
        record(k + 1, "D", state.g)
        if state.g <= 0.0:
            break

    n = len(rows_g)
    return MeasurementSeries(
        np.array(rows_idx, dtype=np.int64),
        np.full(n, model.pulse_spec_ltp.v_write),
        np.full(n, model.pulse_spec_ltp.t_write),
        np.array(rows_pol, dtype="U1"),
        np.array(rows_g, dtype=np.float64),
        device_id="synthetic",
    )


def write_measurements(series: MeasurementSeries, path):
    """Write a MeasurementSeries back out in the canonical CSV schema."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            fh.write(f"# device_id={series.device_id}\n")
            fh.write(f"# read_voltage_V={series.read_voltage_v!r}\n")
            writer.writerow(CSV_HEADER)
            for i in range(len(series)):
                writer.writerow(
                    [
                        int(series.pulse_index[i]),
                        repr(float(series.v_write[i])),
                        repr(float(series.t_write[i])),
                        str(series.polarity[i]),
                        repr(float(series.g_read[i])),
                    ]
                )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# model serialization
# ---------------------------------------------------------------------------


def export_model(model: DeviceModel, path):
    """Write a DeviceModel to JSON (floats at full round-trip precision)."""
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "ltp_coeffs": list(model.ltp_coeffs),
        "ltd_coeffs": list(model.ltd_coeffs),
        "g_min": model.g_min,
        "g_max": model.g_max,
        "dtd_sigma": model.dtd_sigma,
        "pulse_spec_ltp": _spec_doc(model.pulse_spec_ltp),
        "pulse_spec_ltd": _spec_doc(model.pulse_spec_ltd),
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _spec_doc(spec: PulseSpec):
    return {"v_write": spec.v_write, "t_write": spec.t_write, "polarity": spec.polarity}


def _spec_from_doc(doc, where: str) -> PulseSpec:
    if not isinstance(doc, dict) or set(doc) != {"v_write", "t_write", "polarity"}:
        raise SchemaError(f"{where}: malformed pulse spec {doc!r}")
    if doc["polarity"] not in (POTENTIATE, DEPRESS):
        raise SchemaError(f"{where}: bad polarity {doc['polarity']!r}")
    return PulseSpec(float(doc["v_write"]), float(doc["t_write"]), doc["polarity"])


def import_model(path) -> DeviceModel:
    """Read a model JSON written by export_model, re-validating everything."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc

    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"{path}: schema_version {version!r}, this reader supports {MODEL_SCHEMA_VERSION}"
        )
    required = {
        "schema_version",
        "ltp_coeffs",
        "ltd_coeffs",
        "g_min",
        "g_max",
        "dtd_sigma",
        "pulse_spec_ltp",
        "pulse_spec_ltd",
    }
    missing = required - set(doc)
    if missing:
        raise SchemaError(f"{path}: missing field(s) {sorted(missing)}")
    for key in ("ltp_coeffs", "ltd_coeffs"):
        if not isinstance(doc[key], list) or len(doc[key]) != 6:
            raise SchemaError(f"{path}: {key} must be a list of 6 numbers")
    return make_device_model(
        doc["ltp_coeffs"],
        doc["ltd_coeffs"],
        g_min=float(doc["g_min"]),
        g_max=float(doc["g_max"]),
        dtd_sigma=float(doc["dtd_sigma"]),
        pulse_spec_ltp=_spec_from_doc(doc["pulse_spec_ltp"], path),
        pulse_spec_ltd=_spec_from_doc(doc["pulse_spec_ltd"], path),
    )
