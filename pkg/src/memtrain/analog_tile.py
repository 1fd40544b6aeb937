"""Differential crossbar tiles with quantized peripheral converters.

A tile holds a rows x cols grid of device *pairs*: the read weight is

    w_ij = w_max * (g_plus_ij - g_minus_ij)

with both conductances normalized to [0, 1]. Matrix-vector products go
through an input DAC and an output ADC (uniform quantizers with clipping);
the analog multiply-accumulate itself is ideal. Weight changes happen only
through programming pulses routed through the tile's DeviceModel, so all
device nonidealities (state-dependent steps, asymmetry, device-to-device
variation, saturation) apply.

Small input vectors are rescaled up to fill the DAC range and the product
is rescaled back digitally (gain management); without it, late-layer error
signals fall below one ADC step and backprop starves. Inputs at or above
the DAC bound are left alone and clip as usual.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .device_model import (
    DEPRESS,
    POTENTIATE,
    DeviceModel,
    analytic_symmetry_point,
    sample_variation,
    symmetry_points_for_scales,
)
from .errors import InvalidShape, IoError, SchemaError, ShapeMismatch


@dataclass(frozen=True)
class ConverterSpec:
    """Uniform quantizer with 2^bits levels over [lo, hi], clipping outside.

    The level lattice is lo + k*(hi-lo)/2^bits for k in [0, 2^bits - 1];
    for a symmetric range this puts a level exactly at zero, so a zero
    vector converts to zero.
    """

    bits: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.bits < 1 or self.bits > 32:
            raise ValueError(f"bits must be in [1, 32], got {self.bits}")
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def symmetric(cls, bits: int, bound: float) -> "ConverterSpec":
        return cls(bits, -bound, bound)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (1 << self.bits)

    def quantize(self, x):
        q = self.step
        idx = np.clip(np.round((np.asarray(x, dtype=np.float64) - self.lo) / q),
                      0, (1 << self.bits) - 1)
        return self.lo + idx * q


@dataclass
class PulseCounter:
    """Cumulative programming-pulse totals for one tile."""

    ltp: int = 0
    ltd: int = 0

    def snapshot(self) -> tuple[int, int]:
        return (self.ltp, self.ltd)


class AnalogTile:
    """One crossbar of device pairs plus its converters and counters.

    Build through new_tile(); the constructor wires pre-made arrays.
    """

    def __init__(self, rows, cols, model, g_plus, g_minus, scales, dac, adc,
                 w_max, seed, noise_management=True):
        self.rows = rows
        self.cols = cols
        self.model = model
        self.g_plus = g_plus
        self.g_minus = g_minus
        # per-device update-strength factors: (ltp+, ltd+, ltp-, ltd-)
        self.ltp_scale_plus, self.ltd_scale_plus, self.ltp_scale_minus, self.ltd_scale_minus = scales
        self.dac = dac
        self.adc = adc
        self.w_max = float(w_max)
        self.seed = seed
        self.noise_management = bool(noise_management)
        self.counter = PulseCounter()
        self.saturations = 0
        self.reference_frozen = False
        # Default generator for stochastic pulse rounding; trainers may pass
        # their own. Not part of the checkpoint.
        self.update_rng = np.random.default_rng((int(seed), 0x7115E))
        self._weights = self.w_max * (self.g_plus - self.g_minus)

    # -- reading and multiplying ------------------------------------------

    def read_weights(self) -> np.ndarray:
        """Current weight matrix (a copy; the tile keeps its own cache)."""
        return self._weights.copy()

    def _pipeline(self, matrix, vec):
        x = np.asarray(vec, dtype=np.float64)
        batched = x.ndim == 2
        if not batched:
            x = x[None, :]
        if x.shape[1] != matrix.shape[1]:
            raise ShapeMismatch(
                f"input length {x.shape[1]} does not match dimension {matrix.shape[1]}"
            )
        if self.noise_management:
            peak = np.abs(x).max(axis=1, keepdims=True)
            scale = np.where((peak > 0.0) & (peak < self.dac.hi), peak / self.dac.hi, 1.0)
        else:
            scale = np.ones((x.shape[0], 1))
        xq = self.dac.quantize(x / scale)
        y = self.adc.quantize(xq @ matrix.T) * scale
        return y if batched else y[0]

    def forward_mvm(self, x):
        """y = ADC(W @ DAC(x)); accepts one vector or a batch of rows."""
        return self._pipeline(self._weights, x)

    def backward_mvm(self, delta):
        """Same converter pipeline applied to W.T @ delta."""
        return self._pipeline(self._weights.T, delta)

    # -- programming --------------------------------------------------------

    def apply_device_pulses(self, device: str, polarity: str, counts, cols=None):
        """Send `counts[i, j]` pulses to the selected devices, sequentially.

        device is "plus" or "minus"; cols optionally restricts to a column
        subset (counts then has shape rows x len(cols)). Returns the number
        of pulses applied.
        """
        counts = np.asarray(counts)
        if device == "plus":
            g = self.g_plus
            scale = self.ltp_scale_plus if polarity == POTENTIATE else self.ltd_scale_plus
        elif device == "minus":
            if self.reference_frozen:
                raise RuntimeError("reference devices are frozen on this tile")
            g = self.g_minus
            scale = self.ltp_scale_minus if polarity == POTENTIATE else self.ltd_scale_minus
        else:
            raise ValueError(f"device must be 'plus' or 'minus', got {device!r}")
        if polarity == POTENTIATE:
            coeffs, sign = self.model.ltp_coeffs, 1.0
        elif polarity == DEPRESS:
            coeffs, sign = self.model.ltd_coeffs, -1.0
        else:
            raise ValueError(f"unknown polarity {polarity!r}")

        sub = g if cols is None else g[:, cols]
        scl = scale if cols is None else scale[:, cols]
        total = int(counts.sum())
        if total:
            n_max = int(counts.max())
            for k in range(1, n_max + 1):
                mask = counts >= k
                gm = sub[mask]
                raw = gm + sign * scl[mask] * npoly.polyval(gm, coeffs)
                clipped = np.clip(raw, 0.0, 1.0)
                self.saturations += int(np.count_nonzero(clipped != raw))
                sub[mask] = clipped
            if cols is not None:
                g[:, cols] = sub
                self._weights[:, cols] = self.w_max * (self.g_plus[:, cols] - self.g_minus[:, cols])
            else:
                self._weights = self.w_max * (self.g_plus - self.g_minus)
        if polarity == POTENTIATE:
            self.counter.ltp += total
        else:
            self.counter.ltd += total
        return total

    def set_reference_to_symmetry(self):
        """Program every reference device to its own symmetry point, freeze.

        Each g_minus gets the alternating-pair fixed point of *its* device
        (variation factors included), after which reference updates are
        blocked; training then works the active devices bidirectionally
        around a per-device zero.
        """
        self.g_minus = symmetry_points_for_scales(
            self.model, self.ltp_scale_minus, self.ltd_scale_minus
        )
        self.reference_frozen = True
        self._weights = self.w_max * (self.g_plus - self.g_minus)


def default_converters(cols: int, w_max: float, bits: int = 8):
    """DAC over [-1, 1]; ADC sized to 2*w_max*sqrt(cols), a headroom rule
    that avoids routine clipping for random-sign accumulations."""
    dac = ConverterSpec.symmetric(bits, 1.0)
    adc = ConverterSpec.symmetric(bits, 2.0 * w_max * math.sqrt(cols))
    return dac, adc


def new_tile(
    rows: int,
    cols: int,
    model: DeviceModel,
    dac: ConverterSpec | None = None,
    adc: ConverterSpec | None = None,
    w_max: float = 1.0,
    seed: int = 0,
    init_g: float | None = None,
    noise_management: bool = True,
) -> AnalogTile:
    """Create a tile with freshly sampled device variation.

    Both devices of every pair start at init_g (default: the model's
    nominal symmetry point, which makes all weights exactly zero).
    Identical arguments give bitwise-identical tiles.
    """
    if rows < 1 or cols < 1:
        raise InvalidShape(f"tile shape must be positive, got {rows}x{cols}")
    if dac is None or adc is None:
        d_def, a_def = default_converters(cols, w_max)
        dac = dac or d_def
        adc = adc or a_def
    if init_g is None:
        init_g = analytic_symmetry_point(model)
    if not 0.0 <= init_g <= 1.0:
        raise ValueError(f"init_g must lie in [0, 1], got {init_g}")

    rng = np.random.default_rng(seed)
    ltp_p, ltd_p = sample_variation(model, (rows, cols), rng)
    ltp_m, ltd_m = sample_variation(model, (rows, cols), rng)
    g_plus = np.full((rows, cols), float(init_g))
    g_minus = np.full((rows, cols), float(init_g))
    return AnalogTile(
        rows, cols, model, g_plus, g_minus, (ltp_p, ltd_p, ltp_m, ltd_m),
        dac, adc, w_max, seed, noise_management,
    )


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

_CHECKPOINT_VERSION = 1


def save_tile(tile: AnalogTile, path):
    """Write the full tile state to an .npz container (lossless float64)."""
    from .characterization import _spec_doc  # shared JSON shape for pulse specs

    header = {
        "version": _CHECKPOINT_VERSION,
        "rows": tile.rows,
        "cols": tile.cols,
        "w_max": tile.w_max,
        "seed": tile.seed,
        "noise_management": tile.noise_management,
        "reference_frozen": tile.reference_frozen,
        "counter_ltp": tile.counter.ltp,
        "counter_ltd": tile.counter.ltd,
        "saturations": tile.saturations,
        "dac": [tile.dac.bits, tile.dac.lo, tile.dac.hi],
        "adc": [tile.adc.bits, tile.adc.lo, tile.adc.hi],
        "model": {
            "ltp_coeffs": list(tile.model.ltp_coeffs),
            "ltd_coeffs": list(tile.model.ltd_coeffs),
            "g_min": tile.model.g_min,
            "g_max": tile.model.g_max,
            "dtd_sigma": tile.model.dtd_sigma,
            "pulse_spec_ltp": _spec_doc(tile.model.pulse_spec_ltp),
            "pulse_spec_ltd": _spec_doc(tile.model.pulse_spec_ltd),
        },
    }
    try:
        with open(path, "wb") as fh:
            np.savez(
                fh,
                header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
                g_plus=tile.g_plus,
                g_minus=tile.g_minus,
                ltp_scale_plus=tile.ltp_scale_plus,
                ltd_scale_plus=tile.ltd_scale_plus,
                ltp_scale_minus=tile.ltp_scale_minus,
                ltd_scale_minus=tile.ltd_scale_minus,
            )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_tile(path) -> AnalogTile:
    from .characterization import _spec_from_doc
    from .device_model import make_device_model

    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    try:
        header = json.loads(bytes(arrays["header"]).decode())
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed tile checkpoint: {exc}") from exc
    if header.get("version") != _CHECKPOINT_VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint version {header.get('version')!r}")

    mdoc = header["model"]
    model = make_device_model(
        mdoc["ltp_coeffs"],
        mdoc["ltd_coeffs"],
        g_min=mdoc["g_min"],
        g_max=mdoc["g_max"],
        dtd_sigma=mdoc["dtd_sigma"],
        pulse_spec_ltp=_spec_from_doc(mdoc["pulse_spec_ltp"], str(path)),
        pulse_spec_ltd=_spec_from_doc(mdoc["pulse_spec_ltd"], str(path)),
    )
    tile = AnalogTile(
        header["rows"],
        header["cols"],
        model,
        arrays["g_plus"],
        arrays["g_minus"],
        (
            arrays["ltp_scale_plus"],
            arrays["ltd_scale_plus"],
            arrays["ltp_scale_minus"],
            arrays["ltd_scale_minus"],
        ),
        ConverterSpec(*_spec3(header["dac"])),
        ConverterSpec(*_spec3(header["adc"])),
        header["w_max"],
        header["seed"],
        header["noise_management"],
    )
    tile.counter.ltp = int(header["counter_ltp"])
    tile.counter.ltd = int(header["counter_ltd"])
    tile.saturations = int(header["saturations"])
    tile.reference_frozen = bool(header["reference_frozen"])
    return tile


def _spec3(raw):
    bits, lo, hi = raw
    return int(bits), float(lo), float(hi)
