"""Training algorithms for networks of analog differential-pair tiles.

Four trainers share one network shape (sigmoid hidden layers, softmax +
cross-entropy output, per-sample updates):

* ``digital_baseline`` — float weights and exact SGD; the accuracy
  yardstick the analog runs are measured against.
* ``plain`` — each per-sample outer-product update is converted directly
  into programming pulses. Fully parallel and cheap, but gradient noise
  ratchets every conductance toward its own symmetry point, so weights
  pick up a bias of w_max * (g* - g_init) on asymmetric devices.
* ``mixed_precision`` — updates accumulate per synapse in a digital
  buffer (chi) and are flushed to the device only once they exceed a
  threshold, so pulses stay gradient-driven rather than noise-driven.
* ``symmetry_shifted`` — plain pulsed updates, but each pair's reference
  device is first programmed to its own symmetry point and frozen, which
  re-centres the drift exactly where plain SGD needs it.

Pulse bookkeeping: every emitted pulse passes through the tile counters,
and per-epoch deltas are billed to an EnergyLedger at the device model's
write amplitudes (upper-bound convention: all pulses at the potentiation
amplitude).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .analog_tile import AnalogTile, ConverterSpec, new_tile
from .device_model import (
    DEPRESS,
    POTENTIATE,
    DeviceModel,
    reference_update_step,
)
from .energy import EnergyLedger, SchottkyParams
from .errors import ConfigError, DataError, ShapeMismatch

ALGORITHMS = ("digital_baseline", "plain", "mixed_precision", "symmetry_shifted")
ROUNDING_MODES = ("stochastic", "deterministic")

# How a desired conductance change routes to the devices of a pair:
#   active_device       — both polarities on g+, reference untouched
#   potentiate_opposite — negative updates potentiate g- instead
#   depress_opposite    — negative updates depress g- instead
PAIR_POLICIES = ("active_device", "potentiate_opposite", "depress_opposite")

# Fraction of nonzero inputs below which updates use the sparse column path.
_SPARSE_FRACTION = 0.8


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z):
    """Softmax along the last axis, shifted for overflow safety."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# configuration and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkConfig:
    """Network shape plus every knob the analog trainers expose.

    The converter and scale defaults are tuned for this network size:
    inputs live in [0, 1] so the DAC spans [-1, 1]; the ADC bound of 12
    keeps hidden-layer accumulations out of routine clipping at 8 bits;
    w_max = 2 with pairs starting at mid-range gives weights in [-1, 1].
    """

    layer_sizes: tuple[int, ...] = (784, 256, 28, 10)
    lr: float = 0.1
    lr_decay: float = 1.0  # per-epoch multiplier on lr
    epochs: int = 25
    w_max: float = 2.0
    dac_bits: int = 8
    adc_bits: int = 8
    adc_range: float = 12.0
    mp_threshold_steps: float = 1.0  # MP flush threshold, in reference steps
    rounding: str = "stochastic"  # pulse-count rounding for plain updates
    pair_policy: str = "active_device"
    init_g: float = 0.5  # starting conductance for non-shifted runs
    init_weights: str = "glorot"  # starting weights programmed onto g+
    noise_management: bool = True
    histogram_bins: int = 64

    def validate(self):
        sizes = self.layer_sizes
        if len(sizes) < 2 or any(int(s) != s or s < 1 for s in sizes):
            raise ConfigError(f"layer_sizes must be >= 2 positive integers, got {sizes}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not self.w_max > 0:
            raise ConfigError(f"w_max must be > 0, got {self.w_max}")
        for name, bits in (("dac_bits", self.dac_bits), ("adc_bits", self.adc_bits)):
            if not 1 <= bits <= 32:
                raise ConfigError(f"{name} must be in [1, 32], got {bits}")
        if not self.adc_range > 0:
            raise ConfigError(f"adc_range must be > 0, got {self.adc_range}")
        if not self.mp_threshold_steps > 0:
            raise ConfigError(
                f"mp_threshold_steps must be > 0, got {self.mp_threshold_steps}"
            )
        if self.rounding not in ROUNDING_MODES:
            raise ConfigError(f"rounding must be one of {ROUNDING_MODES}")
        if self.pair_policy not in PAIR_POLICIES:
            raise ConfigError(f"pair_policy must be one of {PAIR_POLICIES}")
        if not 0.0 <= self.init_g <= 1.0:
            raise ConfigError(f"init_g must lie in [0, 1], got {self.init_g}")
        if self.init_weights not in ("glorot", "zero"):
            raise ConfigError(
                f"init_weights must be 'glorot' or 'zero', got {self.init_weights!r}"
            )
        if self.histogram_bins < 1:
            raise ConfigError(f"histogram_bins must be >= 1, got {self.histogram_bins}")

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        doc = dict(doc)
        if "layer_sizes" in doc:
            doc["layer_sizes"] = tuple(int(s) for s in doc["layer_sizes"])
        cfg = cls(**doc)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class LayerHistogram:
    """Equal-width weight histogram over [-w_max, w_max] for one layer."""

    edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def mean(self) -> float:
        centers = 0.5 * (np.asarray(self.edges[:-1]) + np.asarray(self.edges[1:]))
        total = sum(self.counts)
        return float(np.dot(centers, self.counts) / total) if total else 0.0

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "counts": list(self.counts)}


@dataclass(frozen=True)
class EpochReport:
    """What one training epoch produced, measured on the test split."""

    epoch: int
    test_accuracy: float
    pulses_ltp: int
    pulses_ltd: int
    energy_j: float
    weight_hist: tuple[LayerHistogram, ...]

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "test_accuracy": self.test_accuracy,
            "pulses_ltp": self.pulses_ltp,
            "pulses_ltd": self.pulses_ltd,
            "energy_j": self.energy_j,
            "weight_hist": [h.to_dict() for h in self.weight_hist],
        }


def epoch_report_from_dict(doc: dict) -> EpochReport:
    hists = tuple(
        LayerHistogram(tuple(h["edges"]), tuple(int(c) for c in h["counts"]))
        for h in doc["weight_hist"]
    )
    return EpochReport(
        epoch=int(doc["epoch"]),
        test_accuracy=float(doc["test_accuracy"]),
        pulses_ltp=int(doc["pulses_ltp"]),
        pulses_ltd=int(doc["pulses_ltd"]),
        energy_j=float(doc["energy_j"]),
        weight_hist=hists,
    )


def weight_histogram(tile: AnalogTile, bins: int = 64) -> LayerHistogram:
    """Histogram of the tile's read weights over [-w_max, w_max]."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    return _matrix_histogram(tile.read_weights(), tile.w_max, bins)


def _matrix_histogram(weights: np.ndarray, w_max: float, bins: int) -> LayerHistogram:
    edges = np.linspace(-w_max, w_max, bins + 1)
    counts, _ = np.histogram(np.clip(weights, -w_max, w_max), bins=edges)
    return LayerHistogram(tuple(float(e) for e in edges), tuple(int(c) for c in counts))


# ---------------------------------------------------------------------------
# digital baseline
# ---------------------------------------------------------------------------


class FloatNetwork:
    """Plain float MLP trained by exact per-sample SGD.

    Weight matrices are (fan_out, fan_in), initialized uniformly in
    +/- sqrt(6 / (fan_in + fan_out)).
    """

    def __init__(self, layer_sizes, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.layer_sizes = tuple(layer_sizes)
        self.weights = []
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))

    def _forward_sample(self, x):
        h = [np.asarray(x, dtype=np.float64)]
        for w in self.weights[:-1]:
            h.append(sigmoid(w @ h[-1]))
        return h, softmax(self.weights[-1] @ h[-1])

    def loss(self, x, y: int) -> float:
        """Cross-entropy of one sample against its integer label."""
        _, p = self._forward_sample(x)
        return -math.log(max(float(p[y]), 1e-300))

    def gradients(self, x, y: int):
        """Per-layer loss gradients for one sample (same shapes as weights)."""
        h, p = self._forward_sample(x)
        d = p.copy()
        d[y] -= 1.0
        grads = [None] * len(self.weights)
        for layer in reversed(range(len(self.weights))):
            grads[layer] = np.outer(d, h[layer])
            if layer > 0:
                d = (self.weights[layer].T @ d) * h[layer] * (1.0 - h[layer])
        return grads

    def train_sample(self, x, y: int, lr: float):
        for w, g in zip(self.weights, self.gradients(x, y)):
            w -= lr * g

    def predict_batch(self, images) -> np.ndarray:
        h = np.asarray(images, dtype=np.float64)
        for w in self.weights[:-1]:
            h = sigmoid(h @ w.T)
        return np.argmax(h @ self.weights[-1].T, axis=1)


# ---------------------------------------------------------------------------
# analog network and pulsed updates
# ---------------------------------------------------------------------------


class AnalogNetwork:
    """A stack of tiles with the same activations as the float baseline."""

    def __init__(self, tiles):
        self.tiles = list(tiles)

    def predict_batch(self, images) -> np.ndarray:
        h = np.asarray(images, dtype=np.float64)
        for tile in self.tiles[:-1]:
            h = sigmoid(tile.forward_mvm(h))
        return np.argmax(self.tiles[-1].forward_mvm(h), axis=1)


def backprop_deltas(tiles, x, y: int):
    """Per-layer inputs and error signals for one sample.

    Runs the quantized forward pass, then pushes the softmax/cross-entropy
    error back through each tile's converters. All deltas are computed
    before any device is programmed, so the updates of one layer never
    contaminate another layer's gradient within the same sample.
    """
    h = [np.asarray(x, dtype=np.float64)]
    for tile in tiles[:-1]:
        h.append(sigmoid(tile.forward_mvm(h[-1])))
    p = softmax(tiles[-1].forward_mvm(h[-1]))

    d = p.copy()
    d[y] -= 1.0
    deltas = [None] * len(tiles)
    for layer in reversed(range(len(tiles))):
        deltas[layer] = d
        if layer > 0:
            d = tiles[layer].backward_mvm(d) * h[layer] * (1.0 - h[layer])
    return h, deltas


def _routes(tile: AnalogTile, policy: str):
    """(device, polarity) targets for positive and negative updates."""
    if policy not in PAIR_POLICIES:
        raise ConfigError(f"pair_policy must be one of {PAIR_POLICIES}, got {policy!r}")
    if tile.reference_frozen or policy == "active_device":
        return ("plus", POTENTIATE), ("plus", DEPRESS)
    if policy == "potentiate_opposite":
        return ("plus", POTENTIATE), ("minus", POTENTIATE)
    return ("plus", POTENTIATE), ("minus", DEPRESS)


def _check_update_shapes(tile: AnalogTile, x, delta, lr):
    if x.shape != (tile.cols,):
        raise ShapeMismatch(f"input shape {x.shape} does not match {tile.cols} columns")
    if delta.shape != (tile.rows,):
        raise ShapeMismatch(f"delta shape {delta.shape} does not match {tile.rows} rows")
    if not lr > 0:
        raise ValueError(f"lr must be > 0, got {lr}")


def _sparse_cols(x):
    """Column subset worth restricting the outer product to, or None."""
    nz = np.flatnonzero(x)
    if nz.size < _SPARSE_FRACTION * x.size:
        return nz
    return None


def plain_sgd_update(
    tile: AnalogTile,
    x,
    delta,
    lr: float,
    rng: np.random.Generator | None = None,
    *,
    ref_step: float | None = None,
    rounding: str = "stochastic",
    policy: str = "active_device",
) -> int:
    """Convert -lr * (delta outer x) directly into programming pulses.

    The desired conductance change per synapse is quantized to whole
    pulses of the model's reference step (stochastic rounding by default,
    so sub-step gradients still act in expectation). Returns the number
    of pulses emitted.
    """
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    _check_update_shapes(tile, x, delta, lr)
    if rounding not in ROUNDING_MODES:
        raise ConfigError(f"rounding must be one of {ROUNDING_MODES}, got {rounding!r}")
    if ref_step is None:
        ref_step = reference_update_step(tile.model)
    if rng is None:
        rng = tile.update_rng

    cols = _sparse_cols(x)
    if cols is not None:
        if cols.size == 0:
            return 0
        x = x[cols]
    dg = (-lr / tile.w_max) * np.outer(delta, x)
    quanta = np.abs(dg) / ref_step
    if rounding == "stochastic":
        base = np.floor(quanta)
        counts = base.astype(np.int64) + (rng.random(quanta.shape) < quanta - base)
    else:
        counts = np.floor(quanta + 0.5).astype(np.int64)
    if not counts.any():
        return 0

    (dev_pos, pol_pos), (dev_neg, pol_neg) = _routes(tile, policy)
    emitted = tile.apply_device_pulses(dev_pos, pol_pos, np.where(dg > 0, counts, 0), cols)
    emitted += tile.apply_device_pulses(dev_neg, pol_neg, np.where(dg < 0, counts, 0), cols)
    return emitted


@dataclass
class MpState:
    """Digital accumulator for mixed-precision training of one tile.

    chi collects desired conductance changes at full precision; a synapse
    fires once |chi| reaches the threshold (normalized-conductance units),
    emitting floor(|chi| / reference step) pulses and keeping the
    remainder.
    """

    chi: np.ndarray
    threshold: float

    def __post_init__(self):
        if math.isnan(self.threshold) or not self.threshold > 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")

    @classmethod
    def for_tile(
        cls,
        tile: AnalogTile,
        threshold_steps: float = 1.0,
        ref_step: float | None = None,
    ) -> "MpState":
        if ref_step is None:
            ref_step = reference_update_step(tile.model)
        return cls(
            chi=np.zeros((tile.rows, tile.cols)), threshold=threshold_steps * ref_step
        )


def mp_sgd_update(
    tile: AnalogTile,
    state: MpState,
    x,
    delta,
    lr: float,
    *,
    ref_step: float | None = None,
    policy: str = "active_device",
) -> int:
    """Accumulate the update digitally; flush synapses past the threshold.

    Because pulses fire only after a systematic error has built up, the
    random-walk component of per-sample gradients never reaches the
    devices — which is what lets this trainer cope with asymmetric
    update curves. Returns the number of pulses emitted.
    """
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    _check_update_shapes(tile, x, delta, lr)
    if state.chi.shape != (tile.rows, tile.cols):
        raise ShapeMismatch(
            f"chi shape {state.chi.shape} does not match tile {tile.rows}x{tile.cols}"
        )
    if ref_step is None:
        ref_step = reference_update_step(tile.model)

    cols = _sparse_cols(x)
    if cols is not None:
        if cols.size == 0:
            return 0
        x = x[cols]
        chi = state.chi[:, cols]
    else:
        chi = state.chi
    chi -= (lr / tile.w_max) * np.outer(delta, x)

    emitted = 0
    fire = np.abs(chi) >= state.threshold
    if fire.any():
        counts = np.zeros(chi.shape, dtype=np.int64)
        counts[fire] = (np.abs(chi[fire]) / ref_step).astype(np.int64)
        (dev_pos, pol_pos), (dev_neg, pol_neg) = _routes(tile, policy)
        emitted += tile.apply_device_pulses(dev_pos, pol_pos, np.where(chi > 0, counts, 0), cols)
        emitted += tile.apply_device_pulses(dev_neg, pol_neg, np.where(chi < 0, counts, 0), cols)
        chi[fire] -= np.sign(chi[fire]) * counts[fire] * ref_step
    if cols is not None:
        state.chi[:, cols] = chi
    return emitted


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    """Everything a finished run leaves behind."""

    reports: list[EpochReport]
    network: object  # FloatNetwork or AnalogNetwork
    ledger: EnergyLedger = field(default_factory=EnergyLedger)


def evaluate(network, images, labels, batch_size: int = 512) -> float:
    """Fraction of argmax-correct predictions (ties go to the lowest class)."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim != 2 or images.shape[0] == 0:
        raise DataError(f"need a non-empty 2-D image array, got shape {images.shape}")
    if labels.shape != (images.shape[0],):
        raise DataError(
            f"labels shape {labels.shape} does not match {images.shape[0]} images"
        )
    correct = 0
    for start in range(0, images.shape[0], batch_size):
        stop = start + batch_size
        preds = network.predict_batch(images[start:stop])
        correct += int(np.count_nonzero(preds == labels[start:stop]))
    return correct / images.shape[0]


def _check_dataset(dataset, sizes):
    for split, images, labels in (
        ("train", dataset.train_images, dataset.train_labels),
        ("test", dataset.test_images, dataset.test_labels),
    ):
        if images.ndim != 2 or images.shape[1] != sizes[0]:
            raise DataError(
                f"{split} images have shape {images.shape}, expected (*, {sizes[0]})"
            )
        if labels.shape != (images.shape[0],):
            raise DataError(f"{split} labels do not match the image count")
        if images.shape[0] and not (0 <= int(labels.min()) <= int(labels.max()) < sizes[-1]):
            raise DataError(f"{split} labels fall outside [0, {sizes[-1]})")


def train_network(
    config: NetworkConfig,
    models,
    algorithm: str,
    seed: int,
    dataset,
    schottky: SchottkyParams | None = None,
) -> TrainResult:
    """Run one full training job and keep the trained network and ledger.

    `models` is one DeviceModel for all layers or a sequence with one per
    layer; it is ignored by the digital baseline. Identical arguments
    give bitwise-identical results.
    """
    config.validate()
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    sizes = config.layer_sizes
    n_layers = len(sizes) - 1
    if isinstance(models, DeviceModel):
        models = [models] * n_layers
    else:
        models = list(models)
        if len(models) != n_layers:
            raise ConfigError(
                f"need one device model per layer ({n_layers}), got {len(models)}"
            )
    _check_dataset(dataset, sizes)

    rng = np.random.default_rng(seed)
    ledger = EnergyLedger()
    mp_states = None
    refs = None
    if algorithm == "digital_baseline":
        tiles = []
        network = FloatNetwork(sizes, seed=seed)
    else:
        tiles = [
            new_tile(
                sizes[layer + 1],
                sizes[layer],
                models[layer],
                dac=ConverterSpec.symmetric(config.dac_bits, 1.0),
                adc=ConverterSpec.symmetric(config.adc_bits, config.adc_range),
                w_max=config.w_max,
                seed=seed * 1000003 + layer,
                init_g=None if algorithm == "symmetry_shifted" else config.init_g,
                noise_management=config.noise_management,
            )
            for layer in range(n_layers)
        ]
        if algorithm == "symmetry_shifted":
            for tile in tiles:
                tile.set_reference_to_symmetry()
        if config.init_weights == "glorot":
            # Program the same starting weights the digital baseline draws
            # onto the active devices. Starting from exact zero instead
            # leaves every hidden unit of a layer identical — zero weights
            # pass back zero deltas, so identical units receive identical
            # updates and the layer never gains capacity.
            for tile, w0 in zip(tiles, FloatNetwork(sizes, seed=seed).weights):
                tile.g_plus[:] = np.clip(tile.g_plus + w0 / tile.w_max, 0.02, 0.98)
                tile._weights = tile.w_max * (tile.g_plus - tile.g_minus)
        network = AnalogNetwork(tiles)
        refs = [reference_update_step(m) for m in models]
        if algorithm == "mixed_precision":
            mp_states = [
                MpState.for_tile(tile, config.mp_threshold_steps, ref)
                for tile, ref in zip(tiles, refs)
            ]

    reports = []
    previous = [tile.counter.snapshot() for tile in tiles]
    for epoch in range(1, config.epochs + 1):
        lr = config.lr * config.lr_decay ** (epoch - 1)
        for i in rng.permutation(dataset.train_images.shape[0]):
            x = dataset.train_images[i]
            y = int(dataset.train_labels[i])
            if algorithm == "digital_baseline":
                network.train_sample(x, y, lr)
                continue
            inputs, deltas = backprop_deltas(tiles, x, y)
            for layer, tile in enumerate(tiles):
                if algorithm == "mixed_precision":
                    mp_sgd_update(
                        tile,
                        mp_states[layer],
                        inputs[layer],
                        deltas[layer],
                        lr,
                        ref_step=refs[layer],
                        policy=config.pair_policy,
                    )
                else:
                    plain_sgd_update(
                        tile,
                        inputs[layer],
                        deltas[layer],
                        lr,
                        rng,
                        ref_step=refs[layer],
                        rounding=config.rounding,
                        policy=config.pair_policy,
                    )

        accuracy = evaluate(network, dataset.test_images, dataset.test_labels)
        epoch_ltp = epoch_ltd = 0
        energy = 0.0
        for layer, tile in enumerate(tiles):
            now = tile.counter.snapshot()
            d_ltp, d_ltd = now[0] - previous[layer][0], now[1] - previous[layer][1]
            previous[layer] = now
            record = ledger.add(
                f"layer{layer}",
                epoch,
                d_ltp,
                d_ltd,
                tile.model.pulse_spec_ltp,
                tile.model.pulse_spec_ltd,
                schottky,
                upper_bound=True,
            )
            epoch_ltp += d_ltp
            epoch_ltd += d_ltd
            energy += record.energy_j
        if algorithm == "digital_baseline":
            hists = tuple(
                _matrix_histogram(w, config.w_max, config.histogram_bins)
                for w in network.weights
            )
        else:
            hists = tuple(weight_histogram(t, config.histogram_bins) for t in tiles)
        reports.append(
            EpochReport(epoch, accuracy, epoch_ltp, epoch_ltd, energy, hists)
        )
    return TrainResult(reports, network, ledger)


def train(
    config: NetworkConfig,
    models,
    algorithm: str,
    seed: int,
    dataset,
    schottky: SchottkyParams | None = None,
) -> list[EpochReport]:
    """Train and return the per-epoch reports (see train_network)."""
    return train_network(config, models, algorithm, seed, dataset, schottky).reports
