"""Independent reference computations used by the tests.

Nothing here imports the package under test.
"""

import math

import numpy as np

# I1(κ)/I0(κ), 30-digit values from an arbitrary-precision evaluation
BESSEL_RATIO = {
    0.5: 0.242499612580801945350702353504,
    1.0: 0.446389965896534507047681795193,
    2.0: 0.697774657964007982006790592552,
    5.0: 0.893383137044085221587005007225,
}
# positive roots of the compatibility equation, same provenance
KAPPA_CIRCLE_D02 = 4.38411711031472275693685507626  # I1/I0(κ) = 0.2 κ
KAPPA_TWO_POINT_D05 = 1.915008048154537481353003061  # tanh κ = 0.5 κ
KAPPA_SPHERE_D02 = 3.62940993595599757576849809247  # coth κ - 1/κ = 0.2 κ


def bessel_i(nu: int, x: float, terms: int = 60) -> float:
    """Modified Bessel function of the first kind by its power series."""
    half = 0.5 * x
    total, term = 0.0, half**nu / math.factorial(nu)
    for k in range(terms):
        total += term
        term *= half * half / ((k + 1) * (k + 1 + nu))
    return total


def bessel_ratio(x: float) -> float:
    return bessel_i(1, x) / bessel_i(0, x)


def trapezoid_order(kappa: float, n_points: int = 10**6, dim: int = 2) -> float:
    """Polar-angle mean of cos θ under e^{κ cos θ} sin^{dim-2} θ by brute trapezoid."""
    t = np.linspace(0.0, np.pi, n_points + 1)
    e = np.exp(kappa * (np.cos(t) - 1.0)) * np.sin(t) ** (dim - 2)
    w = np.ones_like(t)
    w[[0, -1]] = 0.5
    return float((w * e * np.cos(t)).sum() / (w * e).sum())


def langevin(kappa: float) -> float:
    """Mean alignment on S^2: coth κ - 1/κ."""
    return 1.0 / math.tanh(kappa) - 1.0 / kappa


def bisect(fn, lo: float, hi: float, iterations: int = 200) -> float:
    flo = fn(lo)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def two_agent_gap(gap0: float, t: float) -> float:
    """Angle gap of two noiseless agents: g' = -sin g solved in closed form."""
    return 2.0 * math.atan(math.tan(0.5 * gap0) * math.exp(-t))
