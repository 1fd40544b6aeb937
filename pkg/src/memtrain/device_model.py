"""Polynomial conductance-update models for pulsed analog memory devices.

A device is described by two degree-5 polynomials giving the conductance
increment per potentiation (LTP) pulse and the decrement per depression
(LTD) pulse, both as functions of the *normalized* conductance g in [0, 1].
Pulses are applied sequentially:

    g  <-  clip(g + ltp_scale * P_ltp(g), 0, 1)      (potentiate)
    g  <-  clip(g - ltd_scale * P_ltd(g), 0, 1)      (depress)

ltp_scale / ltd_scale are per-device multiplicative factors modelling
device-to-device variation (1.0 for the nominal device).

The symmetry point g* is the conductance at which one potentiation pulse
followed by one depression pulse lands back where it started; devices with
g* far from mid-range respond asymmetrically and are hard to train with
naive pulsed SGD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import InvalidBounds, NonPositiveGradient, UnknownPulseWidth

# Number of samples used to check polynomial positivity on [0, 1].
_POSITIVITY_SAMPLES = 1024

# Per-device variation factors are truncated at +/- 3 sigma and floored here.
_VARIATION_FLOOR = 0.01

POTENTIATE = "potentiate"
DEPRESS = "depress"


@dataclass(frozen=True)
class PulseSpec:
    """Electrical operating point of one programming pulse."""

    v_write: float  # amplitude, volts
    t_write: float  # duration, seconds
    polarity: str  # "potentiate" or "depress"


@dataclass(frozen=True)
class DeviceModel:
    """Fitted update model plus the operating conditions it was fitted at.

    Coefficients are ordered constant-first (c0 + c1*g + ... + c5*g^5) and
    act on normalized conductance. g_min/g_max (siemens) record the physical
    window the normalization maps to.
    """

    ltp_coeffs: tuple[float, ...]
    ltd_coeffs: tuple[float, ...]
    g_min: float
    g_max: float
    dtd_sigma: float
    pulse_spec_ltp: PulseSpec
    pulse_spec_ltd: PulseSpec


@dataclass(frozen=True)
class DeviceState:
    """One physical device: its conductance and variation factors."""

    g: float
    ltp_scale: float = 1.0
    ltd_scale: float = 1.0


class PulseResult(NamedTuple):
    state: DeviceState
    saturations: int  # pulses whose raw update was clipped at a bound


def ltp_step(model: DeviceModel, g):
    """Per-pulse potentiation increment at normalized conductance g."""
    return npoly.polyval(g, model.ltp_coeffs)


def ltd_step(model: DeviceModel, g):
    """Per-pulse depression decrement (positive magnitude) at g."""
    return npoly.polyval(g, model.ltd_coeffs)


def make_device_model(
    ltp_coeffs,
    ltd_coeffs,
    g_min: float,
    g_max: float,
    dtd_sigma: float = 0.0,
    pulse_spec_ltp: PulseSpec | None = None,
    pulse_spec_ltd: PulseSpec | None = None,
) -> DeviceModel:
    """Validate coefficients and bounds and build a DeviceModel.

    Both polynomials must be strictly positive on [0, 1] (checked on a
    1024-point grid): a zero or negative update step means the fit is
    unusable as a pulse response.
    """
    ltp = tuple(float(c) for c in ltp_coeffs)
    ltd = tuple(float(c) for c in ltd_coeffs)
    if len(ltp) != 6 or len(ltd) != 6:
        raise ValueError("update polynomials must have exactly 6 coefficients")
    if not (math.isfinite(g_min) and math.isfinite(g_max)) or g_min >= g_max:
        raise InvalidBounds(f"need g_min < g_max, got ({g_min}, {g_max})")
    if g_min < 0:
        raise InvalidBounds(f"conductance bounds must be non-negative, got g_min={g_min}")
    if dtd_sigma < 0:
        raise ValueError(f"dtd_sigma must be >= 0, got {dtd_sigma}")

    grid = np.linspace(0.0, 1.0, _POSITIVITY_SAMPLES)
    for name, coeffs in (("LTP", ltp), ("LTD", ltd)):
        vals = npoly.polyval(grid, coeffs)
        if not np.all(vals > 0.0):
            k = int(np.argmin(vals))
            raise NonPositiveGradient(
                f"{name} update polynomial is {vals[k]:.3e} at g={grid[k]:.4f}; "
                "must stay positive on [0, 1]"
            )

    if pulse_spec_ltp is None:
        pulse_spec_ltp = PulseSpec(1.0, 1e-6, POTENTIATE)
    if pulse_spec_ltd is None:
        pulse_spec_ltd = PulseSpec(1.0, 1e-6, DEPRESS)
    return DeviceModel(ltp, ltd, float(g_min), float(g_max), float(dtd_sigma),
                       pulse_spec_ltp, pulse_spec_ltd)


def apply_pulses(model: DeviceModel, state: DeviceState, polarity: str,
                 count: int) -> PulseResult:
    """Apply `count` identical pulses sequentially and clamp to [0, 1].

    The update is state-dependent, so pulses cannot be batched into one
    step; each pulse sees the conductance left by the previous one.
    """
    if count < 0:
        raise ValueError(f"pulse count must be >= 0, got {count}")
    if polarity not in (POTENTIATE, DEPRESS):
        raise ValueError(f"unknown polarity {polarity!r}")

    g = state.g
    saturations = 0
    if polarity == POTENTIATE:
        coeffs, scale, sign = model.ltp_coeffs, state.ltp_scale, 1.0
    else:
        coeffs, scale, sign = model.ltd_coeffs, state.ltd_scale, -1.0
    for _ in range(count):
        raw = g + sign * scale * float(npoly.polyval(g, coeffs))
        clipped = min(1.0, max(0.0, raw))
        if clipped != raw:
            saturations += 1
        g = clipped
    return PulseResult(replace(state, g=g), saturations)


def _pair_residual(g, model: DeviceModel, ltp_scale, ltd_scale):
    """f(g) = (state after one LTP then one LTD pulse) - g, vectorized."""
    up = np.clip(g + ltp_scale * npoly.polyval(g, model.ltp_coeffs), 0.0, 1.0)
    down = np.clip(up - ltd_scale * npoly.polyval(up, model.ltd_coeffs), 0.0, 1.0)
    return down - g


def symmetry_points_for_scales(model: DeviceModel, ltp_scales, ltd_scales,
                               grid_points: int = 129) -> np.ndarray:
    """Alternating-pair fixed points for an array of variation factors.

    Brackets the first sign change of the pair residual on a grid, then
    bisects. Because clipping forces f(0) >= 0 and f(1) <= 0, a bracket
    always exists. Shapes of ltp_scales/ltd_scales must match; the result
    has the same shape.
    """
    ltp_scales = np.asarray(ltp_scales, dtype=np.float64)
    ltd_scales = np.asarray(ltd_scales, dtype=np.float64)
    shape = ltp_scales.shape
    lsc = ltp_scales.ravel()
    dsc = ltd_scales.ravel()
    n = lsc.size

    grid = np.linspace(0.0, 1.0, grid_points)
    f = _pair_residual(grid[:, None], model, lsc[None, :], dsc[None, :])

    # First sign change along the grid for every device.
    sign_change = (f[:-1] >= 0.0) & (f[1:] < 0.0)
    first = np.argmax(sign_change, axis=0)
    # argmax returns 0 when no change exists; those residuals are ~0 at g=0.
    has_change = sign_change[first, np.arange(n)]
    lo = np.where(has_change, grid[first], 0.0)
    hi = np.where(has_change, grid[first + 1], 0.0)

    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = _pair_residual(mid, model, lsc, dsc)
        take_hi = fm >= 0.0
        lo = np.where(take_hi, mid, lo)
        hi = np.where(take_hi, hi, mid)
    out = 0.5 * (lo + hi)
    return out.reshape(shape)


def analytic_symmetry_point(model: DeviceModel, ltp_scale: float = 1.0,
                            ltd_scale: float = 1.0) -> float:
    """Find g* such that one LTP pulse then one LTD pulse returns to g*.

    Scans a fine grid for the residual's zero set. If the residual vanishes
    on a whole plateau (degenerate models where every point is fixed), the
    smallest fixed g is returned. Otherwise the first sign change is
    bisected; if no interior crossing exists the boundary with the smaller
    residual magnitude wins.
    """
    grid = np.linspace(0.0, 1.0, 2049)
    f = _pair_residual(grid, model, ltp_scale, ltd_scale)

    # Degenerate plateau: return the smallest fixed point.
    flat = np.abs(f) <= 1e-13
    if flat.any():
        return float(grid[int(np.argmax(flat))])

    idx = np.nonzero((f[:-1] > 0.0) & (f[1:] < 0.0))[0]
    if idx.size == 0:
        return 0.0 if abs(f[0]) <= abs(f[-1]) else 1.0
    lo, hi = grid[idx[0]], grid[idx[0] + 1]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _pair_residual(mid, model, ltp_scale, ltd_scale) >= 0.0:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def sample_variation(model: DeviceModel, shape, rng: np.random.Generator):
    """Draw (ltp_scale, ltd_scale) arrays for a block of devices.

    Factors are Normal(1, dtd_sigma) truncated to +/- 3 sigma by rejection
    and floored at 0.01 so a pathological draw cannot freeze a device.
    """
    sigma = model.dtd_sigma
    if sigma == 0.0:
        ones = np.ones(shape, dtype=np.float64)
        return ones, ones.copy()

    def draw():
        x = rng.normal(1.0, sigma, size=shape)
        bad = np.abs(x - 1.0) > 3.0 * sigma
        while bad.any():
            x[bad] = rng.normal(1.0, sigma, size=int(bad.sum()))
            bad = np.abs(x - 1.0) > 3.0 * sigma
        return np.maximum(x, _VARIATION_FLOOR)

    return draw(), draw()


# ---------------------------------------------------------------------------
# Bundled synthetic device family
# ---------------------------------------------------------------------------
#
# Four write conditions spanning the pulse widths studied experimentally.
# Shorter pulses need higher amplitude, move the conductance in finer steps,
# and respond more asymmetrically (symmetry point far above mid-range); the
# slowest condition is nearly symmetric. Gradients are linear in g — the
# simplest shape that reproduces those qualitative features — expressed as
# degree-5 polynomials with vanishing high-order terms:
#
#   P_ltp(g) = step/(1.05 - g0) * (1.05 - g)
#   P_ltd(g) = step/(g0 + 0.05) * (g  + 0.05)
#
# so both stay strictly positive on [0, 1], cross at g0, and equal `step`
# there. The alternating-pair fixed point sits one depression step below
# the crossing. Depression amplitude is set 10% below potentiation, making
# the potentiation pulse the per-pulse energy upper bound.

_FAMILY = {
    "20ns": dict(t_write=20e-9, v_write=4.0, g_cross=0.795, step=0.006),
    "1us": dict(t_write=1e-6, v_write=3.3, g_cross=0.68, step=0.010),
    "0.2ms": dict(t_write=0.2e-3, v_write=2.6, g_cross=0.60, step=0.015),
    "2ms": dict(t_write=2e-3, v_write=2.0, g_cross=0.52, step=0.018),
}

# Default physical conductance window, siemens.
_FAMILY_G_MIN = 2e-6
_FAMILY_G_MAX = 8e-5

SYNTHETIC_PULSE_WIDTHS = tuple(sorted(p["t_write"] for p in _FAMILY.values()))


def synthetic_device_family(t_write, dtd_sigma: float = 0.05) -> DeviceModel:
    """Return the bundled model for a pulse width (seconds or label).

    Accepts the labels "20ns", "1us", "0.2ms", "2ms" or the matching float
    durations; anything else raises UnknownPulseWidth.
    """
    params = None
    if isinstance(t_write, str):
        params = _FAMILY.get(t_write)
    else:
        for p in _FAMILY.values():
            if math.isclose(float(t_write), p["t_write"], rel_tol=1e-6):
                params = p
                break
    if params is None:
        known = ", ".join(f"{k} ({v['t_write']:g} s)" for k, v in _FAMILY.items())
        raise UnknownPulseWidth(f"no bundled device for t_write={t_write!r}; have {known}")

    g0, step = params["g_cross"], params["step"]
    a = step / (1.05 - g0)
    b = step / (g0 + 0.05)
    ltp = (1.05 * a, -a, 0.0, 0.0, 0.0, 0.0)
    ltd = (0.05 * b, b, 0.0, 0.0, 0.0, 0.0)
    return make_device_model(
        ltp,
        ltd,
        g_min=_FAMILY_G_MIN,
        g_max=_FAMILY_G_MAX,
        dtd_sigma=dtd_sigma,
        pulse_spec_ltp=PulseSpec(params["v_write"], params["t_write"], POTENTIATE),
        pulse_spec_ltd=PulseSpec(0.9 * params["v_write"], params["t_write"], DEPRESS),
    )


def reference_update_step(model: DeviceModel) -> float:
    """Mean of the LTP and LTD step magnitudes at the nominal symmetry point.

    Used by the trainers as the conversion factor between a desired
    conductance change and a pulse count.
    """
    g_star = analytic_symmetry_point(model)
    return float(0.5 * (ltp_step(model, g_star) + ltd_step(model, g_star)))
