"""Write-energy accounting for programming pulses.

Current through the stack during a write follows thermionic (Schottky)
emission over an image-force-lowered barrier:

    I = A * alpha * T^(3/2) * (V/d) * mu * exp(-(phi_B - dphi) / (kB*T))
    dphi = sqrt(V * q / (4*pi*eps0*eps_r*d))        [eV]

Parameters are accepted in the units they are usually quoted in (areas in
um^2, mobility in cm^2/Vs, thickness in nm) and converted to SI once, at
construction. The barrier and kB*T are kept in eV; the image-force term
sqrt(qV / (4*pi*eps0*eps_r*d)) is numerically the lowering in eV for a
single elementary charge, which is the convention used throughout.

A pulse of amplitude V and duration t then dissipates E = I(V) * V * t.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .device_model import PulseSpec
from .errors import NegativeVoltage, SchemaError

_ELEMENTARY_CHARGE = 1.602176634e-19  # C
_EPSILON_0 = 8.8541878128e-12  # F/m


@dataclass(frozen=True)
class SchottkyParams:
    """Stack parameters for the emission current, in customary units."""

    area_um2: float = 4.0
    alpha: float = 3e-4  # A s cm^-3 K^-3/2
    temperature_k: float = 300.0
    thickness_nm: float = 5.0
    mobility_cm2: float = 8.9e-3  # cm^2 / (V s)
    barrier_ev: float = 0.19
    epsilon_r: float = 18.2
    boltzmann_ev: float = 8.617e-5  # eV / K

    @classmethod
    def from_json(cls, path) -> "SchottkyParams":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise SchemaError(f"{path}: expected a JSON object of parameter overrides")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise SchemaError(f"{path}: unknown parameter(s) {sorted(unknown)}")
        return cls(**doc)


def schottky_current(v, params: SchottkyParams | None = None):
    """Emission current in amperes at bias v (volts, scalar or array)."""
    p = params or SchottkyParams()
    v_arr = np.asarray(v, dtype=np.float64)
    if np.any(v_arr < 0.0):
        raise NegativeVoltage(f"bias must be >= 0, got {v!r}")

    area_m2 = p.area_um2 * 1e-12
    alpha_si = p.alpha * 1e6  # per cm^3 -> per m^3
    d_m = p.thickness_nm * 1e-9
    mu_si = p.mobility_cm2 * 1e-4

    prefactor = area_m2 * alpha_si * p.temperature_k**1.5 * mu_si / d_m
    # image-force barrier lowering, eV (single elementary charge)
    dphi = np.sqrt(v_arr * _ELEMENTARY_CHARGE / (4.0 * math.pi * _EPSILON_0 * p.epsilon_r * d_m))
    kt = p.boltzmann_ev * p.temperature_k
    current = prefactor * v_arr * np.exp(-(p.barrier_ev - dphi) / kt)
    if np.isscalar(v) or v_arr.ndim == 0:
        return float(current)
    return current


def pulse_energy(spec: PulseSpec, params: SchottkyParams | None = None) -> float:
    """Energy in joules dissipated by one pulse: I(V) * V * t."""
    return schottky_current(spec.v_write, params) * spec.v_write * spec.t_write


def epoch_energy(
    pulses_ltp: int,
    pulses_ltd: int,
    spec_ltp: PulseSpec,
    spec_ltd: PulseSpec,
    params: SchottkyParams | None = None,
    upper_bound: bool = True,
) -> float:
    """Total write energy for an epoch's pulse counts.

    In the default upper-bound mode every pulse is billed at the
    potentiation amplitude (the larger of the two), which bounds the true
    cost from above without tracking per-pulse polarity voltages. Set
    upper_bound=False for the per-polarity split.
    """
    if pulses_ltp < 0 or pulses_ltd < 0:
        raise ValueError("pulse counts must be >= 0")
    if upper_bound:
        return (pulses_ltp + pulses_ltd) * pulse_energy(spec_ltp, params)
    return pulses_ltp * pulse_energy(spec_ltp, params) + pulses_ltd * pulse_energy(
        spec_ltd, params
    )


@dataclass(frozen=True)
class EnergyRecord:
    tile_id: str
    epoch: int
    pulses_ltp: int
    pulses_ltd: int
    energy_j: float


@dataclass
class EnergyLedger:
    """Append-only record of per-tile, per-epoch write energy."""

    records: list[EnergyRecord] = field(default_factory=list)

    def add(
        self,
        tile_id: str,
        epoch: int,
        pulses_ltp: int,
        pulses_ltd: int,
        spec_ltp: PulseSpec,
        spec_ltd: PulseSpec,
        params: SchottkyParams | None = None,
        upper_bound: bool = True,
    ) -> EnergyRecord:
        rec = EnergyRecord(
            tile_id,
            epoch,
            pulses_ltp,
            pulses_ltd,
            epoch_energy(pulses_ltp, pulses_ltd, spec_ltp, spec_ltd, params, upper_bound),
        )
        self.records.append(rec)
        return rec

    def total_j(self) -> float:
        return sum(r.energy_j for r in self.records)

    def total_pulses(self) -> tuple[int, int]:
        return (
            sum(r.pulses_ltp for r in self.records),
            sum(r.pulses_ltd for r in self.records),
        )
