"""Straight-line high-precision evaluation of the emission-current formula.

Kept deliberately independent of the package: every constant is written
out in SI here and the arithmetic is done with mpmath at 50 digits. Used
by the energy tests as a cross-check oracle.
"""

import mpmath as mp

mp.mp.dps = 50


def oracle_current(v):
    """Current in amperes at bias v volts (nominal stack parameters)."""
    v = mp.mpf(v)
    if v == 0:
        return mp.mpf(0)

    area = mp.mpf("4e-12")  # m^2        (4 um^2)
    alpha = mp.mpf("3e-4") * mp.mpf("1e6")  # A s m^-3 K^-3/2
    temp = mp.mpf(300)
    dist = mp.mpf("5e-9")  # m
    mob = mp.mpf("8.9e-3") * mp.mpf("1e-4")  # m^2/(V s)
    barrier = mp.mpf("0.19")  # eV
    eps_r = mp.mpf("18.2")
    k_b = mp.mpf("8.617e-5")  # eV/K
    q_e = mp.mpf("1.602176634e-19")  # C
    eps0 = mp.mpf("8.8541878128e-12")  # F/m

    lowering = mp.sqrt(q_e * v / (4 * mp.pi * eps0 * eps_r * dist))
    exponent = (lowering - barrier) / (k_b * temp)
    return area * alpha * temp ** mp.mpf("1.5") * (v / dist) * mob * mp.e**exponent


def oracle_energy(v, t):
    return oracle_current(v) * mp.mpf(v) * mp.mpf(t)


if __name__ == "__main__":
    for volts in ("0.1", "0.5", "1.0", "2.0", "4.0"):
        print(volts, mp.nstr(oracle_current(volts), 17))
