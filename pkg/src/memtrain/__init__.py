"""Training simulator for memristive crossbar networks.

Pulsed conductance-update device models, quantized crossbar tiles in a
differential-pair arrangement, four trainers (plain pulsed SGD,
mixed-precision SGD, symmetry-point-shifted SGD, and a float digital
baseline), Schottky-emission write-energy accounting, and a seeded sweep
runner with plot-ready reports.
"""

from .analog_tile import AnalogTile, ConverterSpec, default_converters, load_tile, new_tile, save_tile
from .characterization import (
    FitReport,
    MeasurementSeries,
    export_model,
    find_symmetry_point_protocol,
    fit_gradients,
    import_model,
    load_measurements,
    synthetic_trace,
    write_measurements,
)
from .dataset import (
    DATA_DIR_ENV,
    Dataset,
    fetch_mnist,
    load_ci_subset,
    load_mnist,
    resolve_dataset,
)
from .device_model import (
    DEPRESS,
    POTENTIATE,
    DeviceModel,
    DeviceState,
    PulseSpec,
    analytic_symmetry_point,
    apply_pulses,
    ltd_step,
    ltp_step,
    make_device_model,
    reference_update_step,
    sample_variation,
    synthetic_device_family,
)
from .energy import (
    EnergyLedger,
    EnergyRecord,
    SchottkyParams,
    epoch_energy,
    pulse_energy,
    schottky_current,
)
from .errors import MemtrainError
from .sweep import RunSpec, SweepPlan, load_plan, report, run_sweep
from .trainers import (
    ALGORITHMS,
    EpochReport,
    MpState,
    NetworkConfig,
    TrainResult,
    evaluate,
    mp_sgd_update,
    plain_sgd_update,
    train,
    train_network,
    weight_histogram,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "AnalogTile",
    "ConverterSpec",
    "DATA_DIR_ENV",
    "DEPRESS",
    "Dataset",
    "DeviceModel",
    "DeviceState",
    "EnergyLedger",
    "EnergyRecord",
    "EpochReport",
    "FitReport",
    "MeasurementSeries",
    "MemtrainError",
    "MpState",
    "NetworkConfig",
    "POTENTIATE",
    "PulseSpec",
    "RunSpec",
    "SchottkyParams",
    "SweepPlan",
    "TrainResult",
    "analytic_symmetry_point",
    "apply_pulses",
    "default_converters",
    "epoch_energy",
    "evaluate",
    "export_model",
    "fetch_mnist",
    "find_symmetry_point_protocol",
    "fit_gradients",
    "import_model",
    "load_ci_subset",
    "load_measurements",
    "load_mnist",
    "load_plan",
    "load_tile",
    "ltd_step",
    "ltp_step",
    "make_device_model",
    "mp_sgd_update",
    "new_tile",
    "plain_sgd_update",
    "pulse_energy",
    "reference_update_step",
    "report",
    "resolve_dataset",
    "run_sweep",
    "sample_variation",
    "save_tile",
    "schottky_current",
    "synthetic_device_family",
    "synthetic_trace",
    "train",
    "train_network",
    "weight_histogram",
    "write_measurements",
]
