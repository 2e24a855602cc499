"""Finite-volume solver for the macroscopic Nash-closure system

    ∂_t ρ + ∇·(c(ρ) ρ Ω) = 0,
    ∂_t Ω + b(ρ) (Ω·∇) Ω + Θ(ρ) P_{Ω⊥} ∇ρ = 0,      |Ω| = 1,

on the periodic unit torus in one or two dimensions, where
c(ρ) = c(κ_{d/ρ}) is the equilibrium order parameter.

The orientation is stored as an angle φ with Ω = (cos φ, sin φ), so the
unit constraint holds to rounding.  In one dimension fields are taken
independent of the second coordinate, and the angle equation reads
∂_t φ + b cos φ ∂_x φ - Θ sin φ ∂_x ρ = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigurationError, DomainError
from .expressions import Profile
from .nash import concentration

log = logging.getLogger(__name__)

CFL_NUMBER = 0.5


@dataclass(frozen=True, eq=False)
class MacroFields:
    rho: np.ndarray
    angle: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        angle = np.broadcast_to(np.asarray(self.angle, dtype=float), rho.shape).copy()
        if rho.ndim not in (1, 2) or (rho.ndim == 2 and rho.shape[0] != rho.shape[1]):
            raise DomainError("macro fields live on an M or M x M periodic grid")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "angle", angle)

    @property
    def dim(self) -> int:
        return self.rho.ndim

    @property
    def dx(self) -> float:
        return 1.0 / self.rho.shape[0]

    @property
    def omega(self) -> np.ndarray:
        return np.stack([np.cos(self.angle), np.sin(self.angle)], axis=-1)

    def mass(self) -> float:
        return float(self.rho.sum() * self.dx**self.dim)

    def cell_centres(self):
        m = self.rho.shape[0]
        return (np.arange(m) + 0.5) / m


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """c(ρ) tabulated on a grid uniform in s = sqrt(1/n - d/ρ), plus b and Θ.

    c is smooth in s across the threshold ρ_c = n d (it vanishes like the
    square root of ρ - ρ_c), which is why the table is built in s.  The
    interpolant is a cubic Hermite spline through exact slopes dc/ds.
    """

    d: float
    n: int
    b: Profile
    theta: Profile
    rho_min: float
    rho_max: float
    samples: int
    rho_nodes: np.ndarray = field(repr=False)
    c_nodes: np.ndarray = field(repr=False)
    _interp: object = field(repr=False, default=None)

    @property
    def rho_critical(self) -> float:
        return self.n * self.d

    def _s(self, rho):
        return np.sqrt(np.maximum(1.0 / self.n - self.d / rho, 0.0))

    def c_of_rho(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.zeros(rho.shape)
        above = rho > self.rho_critical
        if not np.any(above):
            return out
        r = rho[above]
        vals = np.empty(r.shape)
        inside = r <= self.rho_max
        if self._interp is not None:
            vals[inside] = self._interp(self._s(r[inside]))
        else:
            vals[inside] = 0.0
        if np.any(~inside):
            de = self.d / r[~inside]
            vals[~inside] = de * concentration(de, self.n)
        out[above] = vals
        return out

    def slope(self, rho):
        """Secant slope of c between the table nodes bracketing ρ."""
        rho = np.asarray(rho, dtype=float)
        nodes, cs = self.rho_nodes, self.c_nodes
        if nodes.size < 2:
            return np.zeros(rho.shape)
        sec = np.diff(cs) / np.diff(nodes)
        idx = np.clip(np.searchsorted(nodes, rho) - 1, 0, sec.size - 1)
        out = np.abs(sec[idx])
        # one node spacing below threshold still sees the steep first secant
        out = np.where(rho < nodes[0] - (nodes[1] - nodes[0]), 0.0, out)
        beyond = rho > nodes[-1]
        if np.any(beyond):
            r = rho[beyond]
            out[beyond] = np.abs(self.c_of_rho(1.01 * r) - self.c_of_rho(r)) / (0.01 * r)
        return out


def _order_slope_in_s(s, c, de, n):
    """dc/ds along the root branch c = de κ, with de = 1/n - s².

    Uses the identity c'(κ) = 1 - c² - (n - 1) c / κ.  At threshold the
    small-κ expansion gives c ≈ sqrt(n + 2) s.
    """
    kappa = np.where(s > 0, c / de, 1.0)
    slope_k = 1.0 - c**2 - (n - 1) * c / kappa
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -2.0 * s * kappa * slope_k / (slope_k - de)
    out[s == 0] = math.sqrt(n + 2.0)
    # saturated nodes (c rounds to 1) have zero slope
    return np.where(np.isfinite(out), out, 0.0)


def build_coefficients(d: float, n: int, b_spec, theta_spec, rho_range=(1e-3, 10.0),
                       samples: int = 256) -> CoefficientTable:
    """Tabulate c(κ_{d/ρ}) over ``rho_range`` and compile b, Θ profiles.

    Raises ConfigurationError for unparsable or non-finite profiles.
    """
    lo, hi = (float(v) for v in rho_range)
    if not (0 < lo < hi):
        raise ConfigurationError(f"rho_range must satisfy 0 < lower < upper, got {rho_range}")
    if not d > 0:
        raise ConfigurationError(f"d must lie in (0, inf), got {d}")
    if samples < 4:
        raise ConfigurationError("samples must be >= 4")
    b, theta = Profile(b_spec), Profile(theta_spec)
    probe = np.linspace(lo, hi, 64)
    b.check(probe)
    theta.check(probe)

    rho_c = n * d
    interp = None
    rho_nodes = np.array([rho_c])
    c_nodes = np.array([0.0])
    if hi > rho_c:
        s_max = math.sqrt(1.0 / n - d / hi)
        s = np.linspace(0.0, s_max, samples)
        rho_nodes = d / (1.0 / n - s**2)
        de = d / rho_nodes
        c_nodes = de * concentration(de, n)
        c_nodes[0] = 0.0
        interp = CubicHermiteSpline(s, c_nodes, _order_slope_in_s(s, c_nodes, de, n))
    return CoefficientTable(d, n, b, theta, lo, hi, samples, rho_nodes, c_nodes, interp)


def _wrap(a):
    return np.mod(a + np.pi, 2.0 * np.pi) - np.pi


def wave_speed(state: MacroFields, coeffs: CoefficientTable) -> float:
    """max(c + ρ|c'|, |b|) + sqrt(max cρ|Θ|) over cells.

    The square-root term bounds the coupling between the two equations:
    the 2x2 characteristic matrix has off-diagonal entries cρ sin φ and
    Θ sin φ.
    """
    rho = state.rho
    c = coeffs.c_of_rho(rho)
    mass_speed = c + rho * coeffs.slope(rho)
    b = np.abs(coeffs.b(rho))
    coupling = np.sqrt(np.max(np.abs(c * rho * coeffs.theta(rho))))
    return float(np.max(np.maximum(mass_speed, b)) + coupling)


def stable_dt(state: MacroFields, coeffs: CoefficientTable) -> float:
    speed = wave_speed(state, coeffs)
    return math.inf if speed == 0.0 else CFL_NUMBER * state.dx / speed


def _mass_fluxes(g, omega_components, axes):
    # vector splitting: donor cell by the sign of its own Ω component
    fluxes = []
    for a in axes:
        w = omega_components[a]
        fluxes.append(g * np.maximum(w, 0.0) + np.roll(g * np.minimum(w, 0.0), -1, axis=a))
    return fluxes


def step(state: MacroFields, coeffs: CoefficientTable, dt: float) -> MacroFields:
    """One explicit upwind step.  Raises ConfigurationError on CFL violation."""
    bound = stable_dt(state, coeffs)
    if dt > bound * (1 + 1e-12):
        raise ConfigurationError(f"dt = {dt:.6g} violates the CFL bound {bound:.6g}")
    rho, phi, dx = state.rho, state.angle, state.dx
    axes = range(state.dim)
    cos, sin = np.cos(phi), np.sin(phi)
    comps = (cos, sin)
    g = coeffs.c_of_rho(rho) * rho
    lam = dt / dx

    fluxes = _mass_fluxes(g, comps, axes)
    new_rho = rho - lam * sum(f - np.roll(f, 1, axis=a) for a, f in zip(axes, fluxes))
    if np.min(new_rho) < 0.0:
        # scale each donor's outflow so it cannot export more than it holds
        outflow = lam * g * sum(np.abs(comps[a]) for a in axes)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(outflow > rho, rho / outflow, 1.0)
        log.warning("positivity limiter engaged in %d cells", int(np.sum(scale < 1.0)))
        fluxes = _mass_fluxes(g * scale, comps, axes)
        new_rho = rho - lam * sum(f - np.roll(f, 1, axis=a) for a, f in zip(axes, fluxes))
        new_rho = np.maximum(new_rho, 0.0)

    b = coeffs.b(rho)
    theta = coeffs.theta(rho)
    perp = (-sin, cos)
    rate = np.zeros_like(phi)
    for a in axes:
        vel = b * comps[a]
        back = _wrap(phi - np.roll(phi, 1, axis=a))
        fwd = _wrap(np.roll(phi, -1, axis=a) - phi)
        rate += vel * np.where(vel > 0.0, back, fwd) / dx
        grad_rho = (np.roll(rho, -1, axis=a) - np.roll(rho, 1, axis=a)) / (2.0 * dx)
        rate += theta * perp[a] * grad_rho
    new_phi = _wrap(phi - dt * rate)
    return MacroFields(new_rho, new_phi, state.time + dt)


@dataclass(frozen=True, eq=False)
class MacroTrajectory:
    times: np.ndarray
    states: list
    steps: int

    @property
    def final(self) -> MacroFields:
        return self.states[-1]


def run(state: MacroFields, coeffs: CoefficientTable, t_end: float, record_times=None,
        safety: float = 0.9, max_steps: int = 10_000_000, callback=None) -> MacroTrajectory:
    """Adaptive-dt integration to ``t_end``; records at ``record_times`` and the end.

    Each step uses ``safety`` times the CFL bound, shortened to land exactly
    on the next record time.
    """
    if t_end < 0:
        raise ConfigurationError("t_end must be >= 0")
    marks = sorted({float(t) for t in ([] if record_times is None else record_times) if 0.0 < t < t_end} | {float(t_end)})
    times, states = [state.time], [state]
    if t_end == 0.0:
        return MacroTrajectory(np.array(times), states, 0)
    t0 = state.time
    current, n = state, 0
    for mark in marks:
        while current.time - t0 < mark * (1 - 1e-14):
            dt = safety * stable_dt(current, coeffs)
            remaining = t0 + mark - current.time
            dt = min(dt, remaining)
            new = step(current, coeffs, dt)
            # land on the mark exactly
            if dt == remaining:
                new = MacroFields(new.rho, new.angle, t0 + mark)
            current = new
            n += 1
            if callback is not None:
                callback(n, current)
            if n >= max_steps:
                raise ConfigurationError(f"macro run exceeded {max_steps} steps")
        times.append(current.time)
        states.append(current)
    return MacroTrajectory(np.array(times), states, n)
