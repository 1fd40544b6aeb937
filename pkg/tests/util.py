"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as npoly

from memtrain.device_model import PulseSpec, make_device_model


def random_valid_model(rng: np.random.Generator, dtd_sigma: float = 0.0):
    """Random device model with an interior symmetry point.

    Linear backbone (LTP falling, LTD rising, crossing inside (0.25, 0.75))
    plus small degree-5 perturbations, resampled until both polynomials are
    strictly positive on [0, 1]. Step sizes are kept large enough that the
    alternating-pair iteration contracts briskly.
    """
    for _ in range(200):
        g_cross = rng.uniform(0.25, 0.75)
        step = rng.uniform(0.05, 0.12)
        a = step / (1.1 - g_cross)
        b = step / (g_cross + 0.1)
        ltp = np.array([1.1 * a, -a, 0.0, 0.0, 0.0, 0.0])
        ltd = np.array([0.1 * b, b, 0.0, 0.0, 0.0, 0.0])
        # gentle high-order wiggles, small against the base step
        ltp[2:] += rng.uniform(-0.02, 0.02, size=4) * step
        ltd[2:] += rng.uniform(-0.02, 0.02, size=4) * step
        grid = np.linspace(0.0, 1.0, 512)
        if np.all(npoly.polyval(grid, ltp) > 1e-4) and np.all(
            npoly.polyval(grid, ltd) > 1e-4
        ):
            return make_device_model(
                ltp,
                ltd,
                g_min=1e-6,
                g_max=1e-4,
                dtd_sigma=dtd_sigma,
                pulse_spec_ltp=PulseSpec(2.0, 1e-6, "potentiate"),
                pulse_spec_ltd=PulseSpec(1.8, 1e-6, "depress"),
            )
    raise AssertionError("could not draw a valid random model")
