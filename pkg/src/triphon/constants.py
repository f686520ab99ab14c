"""Physical constants (2019 SI exact values) and flux-periodic trig helpers."""

import math

# Planck constant (J s) and reduced Planck constant
h = 6.62607015e-34
hbar = h / (2.0 * math.pi)

# Elementary charge (C)
e = 1.602176634e-19

# Boltzmann constant (J/K)
kB = 1.380649e-23

# Magnetic flux quantum h/2e (Wb) and reduced flux quantum hbar/2e
Phi0 = h / (2.0 * e)
phi0 = hbar / (2.0 * e)


def cospi(x: float) -> float:
    """cos(pi*x), exact at half-integer x.

    Flux biases are expressed in units of the flux quantum, so tuning points
    like x = 0.5 must map to an exact zero rather than cos(pi/2) ~ 6e-17.
    """
    k = round(2.0 * x)
    if 2.0 * x == k:
        return (1.0, 0.0, -1.0, 0.0)[int(k) % 4]
    return math.cos(math.pi * x)


def sinpi(x: float) -> float:
    """sin(pi*x), exact at half-integer x."""
    k = round(2.0 * x)
    if 2.0 * x == k:
        return (0.0, 1.0, 0.0, -1.0)[int(k) % 4]
    return math.sin(math.pi * x)


def thermal_occupation(omega: float, T: float) -> float:
    """Bose-Einstein occupation of a mode at angular frequency omega (rad/s)
    for bath temperature T (K). T <= 0 is treated as the vacuum limit."""
    if T <= 0.0:
        return 0.0
    x = hbar * omega / (kB * T)
    return 1.0 / math.expm1(x)
