"""Kinetic equation ∂_t f + ∇_x·(V f) = Q(f)/ε on the torus [0,1)^m × S¹.

The collision operator at each x-cell is the homogeneous drift-diffusion
operator applied to the unnormalized f(x, ·) with the local herding cost
Φ = -y·∫ y' f(x, y') dy' = -ρ y·W̃_ν.  The transport velocity is the
decision vector V(y) = (cos θ, sin θ); in one space dimension fields do
not depend on the second coordinate and only cos θ transports.

Time stepping is Strang splitting: half a step of first-order upwind
transport, one collision step (sub-cycled so every sub-step meets the
homogeneous step bound), half a step of transport.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cost import Herding
from .errors import ConfigurationError, SchemeInstabilityError, StructuralError
from .homogeneous import SEMI_IMPLICIT_SAFETY, Scheme, advance_values
from .macro import CoefficientTable, MacroFields, build_coefficients
from .macro import run as macro_run
from .manifold import Circle, ManifoldGrid, circle, integrate_values, mean_vector_values
from .nash import concentration

RHO_FLOOR = 1e-12
TRANSPORT_CFL = 0.5
_HERDING = Herding(1.0)


@dataclass(frozen=True, eq=False)
class KineticField:
    """f(x, y) with shape x_cells + (N_y,); x cells are centred at (i + 1/2)/M."""

    values: np.ndarray
    y_grid: ManifoldGrid

    def __post_init__(self):
        if not isinstance(self.y_grid.kind, Circle):
            raise StructuralError("kinetic decisions live on the circle")
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (2, 3) or v.shape[-1] != self.y_grid.size:
            raise StructuralError(
                f"values of shape {v.shape} do not fit x cells × {self.y_grid.size} angles"
            )
        if v.ndim == 3 and v.shape[0] != v.shape[1]:
            raise StructuralError("2D configuration grids must be square")
        object.__setattr__(self, "values", v)

    @property
    def x_cells(self) -> tuple:
        return self.values.shape[:-1]

    @property
    def dim(self) -> int:
        return self.values.ndim - 1

    @property
    def dx(self) -> float:
        return 1.0 / self.values.shape[0]

    def density(self) -> np.ndarray:
        return integrate_values(self.y_grid, self.values)

    def mass(self) -> float:
        return float(self.density().sum() * self.dx**self.dim)

    def with_values(self, values) -> "KineticField":
        return KineticField(values, self.y_grid)


def cell_centres(m_cells: int) -> np.ndarray:
    return (np.arange(m_cells) + 0.5) / m_cells


def _vmf_rows(y_grid, kappa, angle):
    # nodal VMF densities exp(κ cos(θ - φ)), one per x cell
    theta = y_grid.nodes
    proj = np.cos(theta - angle[..., None])
    e = np.exp(kappa[..., None] * (proj - 1.0))
    return e / integrate_values(y_grid, e)[..., None]


def local_equilibrium(rho, angle, d: float, y_grid: ManifoldGrid | None = None) -> KineticField:
    """f = ρ(x) M_{κ_{d/ρ(x)} Ω(x)} on a circle grid (uniform where d/ρ ≥ 1/2)."""
    y_grid = circle() if y_grid is None else y_grid
    rho = np.asarray(rho, dtype=float)
    angle = np.broadcast_to(np.asarray(angle, dtype=float), rho.shape)
    kappa = np.zeros(rho.shape)
    pos = rho > RHO_FLOOR
    kappa[pos] = concentration(d / rho[pos], 2)
    return KineticField(rho[..., None] * _vmf_rows(y_grid, kappa, angle), y_grid)


@dataclass(frozen=True, eq=False)
class MomentFields:
    rho: np.ndarray
    u: np.ndarray
    lte_residual: np.ndarray


def moments(f: KineticField, d: float) -> MomentFields:
    """ρ, mean velocity u and the L¹ distance of ν = f/ρ to its local equilibrium."""
    g = f.y_grid
    rho = f.density()
    flux = mean_vector_values(g, f.values)
    occupied = rho > RHO_FLOOR
    u = np.zeros(flux.shape)
    u[occupied] = flux[occupied] / rho[occupied][:, None]
    speed = np.linalg.norm(u, axis=-1)
    kappa = np.zeros(rho.shape)
    kappa[occupied] = concentration(d / rho[occupied], 2)
    # no preferred direction: the local equilibrium is uniform
    kappa[speed == 0.0] = 0.0
    angle = np.arctan2(u[..., 1], u[..., 0])
    target = _vmf_rows(g, kappa, angle)
    nu = np.zeros_like(f.values)
    nu[occupied] = f.values[occupied] / rho[occupied][:, None]
    residual = integrate_values(g, np.abs(nu - target))
    residual[~occupied] = 0.0
    return MomentFields(rho=rho, u=u, lte_residual=residual)


def _transport(values, y_grid, dim, tau, dx):
    lam = tau / dx
    out = values.copy()
    for axis in range(dim):
        v = y_grid.vectors[:, axis]
        flux = values * np.maximum(v, 0.0) + np.roll(values * np.minimum(v, 0.0), -1, axis=axis)
        out -= lam * (flux - np.roll(flux, 1, axis=axis))
    return out


def collision_substeps(f: KineticField, epsilon: float, dt: float) -> int:
    """Sub-steps needed so each collision sub-step obeys the homogeneous bound.

    With Φ = -ρ y·W̃ the cost gradient is at most ρ_max, so the bound is
    0.25 h_y / ρ_max in the rescaled time dt/ε.
    """
    rho_max = float(np.max(f.density()))
    if rho_max <= 0.0:
        return 1
    bound = SEMI_IMPLICIT_SAFETY * f.y_grid.spacing / rho_max
    return max(1, math.ceil((dt / epsilon) / bound * (1 - 1e-12)))


def split_step(f: KineticField, epsilon: float, d: float, dt: float,
               substeps: int | None = None) -> KineticField:
    """One Strang step; raises ConfigurationError when dt > 0.5 Δx."""
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must lie in (0, inf), got {epsilon}")
    if not d > 0:
        raise ConfigurationError(f"d must lie in (0, inf), got {d}")
    if not 0 < dt <= TRANSPORT_CFL * f.dx * (1 + 1e-12):
        raise ConfigurationError(
            f"dt = {dt} violates the transport CFL bound {TRANSPORT_CFL * f.dx:.6g}"
        )
    g, dim, dx = f.y_grid, f.dim, f.dx
    values = _transport(f.values, g, dim, 0.5 * dt, dx)
    n_sub = collision_substeps(f.with_values(values), epsilon, dt) if substeps is None else substeps
    tau = dt / epsilon / n_sub
    shape = values.shape
    flat = values.reshape(-1, shape[-1])
    for _ in range(n_sub):
        flat = advance_values(_HERDING, g, flat, d, tau, Scheme.SEMI_IMPLICIT)
    values = _transport(flat.reshape(shape), g, dim, 0.5 * dt, dx)
    low = float(values.min())
    if low < -1e-12:
        raise SchemeInstabilityError(f"kinetic density reached {low:.3e}")
    return f.with_values(np.maximum(values, 0.0) if low < 0 else values)


@dataclass(frozen=True, eq=False)
class KineticTrajectory:
    times: np.ndarray
    mass: np.ndarray
    mean_lte_residual: np.ndarray
    rho: list = field(repr=False)
    final: KineticField = field(repr=False, default=None)


def run(f0: KineticField, epsilon: float, d: float, t_end: float, dt: float | None = None,
        record_times=None, callback=None) -> KineticTrajectory:
    """Equal steps of at most ``dt`` (default 0.5 Δx) to ``t_end``; ρ is stored at records."""
    dt_max = TRANSPORT_CFL * f0.dx if dt is None else dt
    n = max(0, math.ceil(t_end / dt_max - 1e-9))
    step_dt = t_end / n if n else 0.0
    marks = set()
    for t in ([] if record_times is None else record_times):
        if n and 0 < t < t_end:
            marks.add(int(round(t / step_dt)))
    marks.add(n)
    times, mass, res, rhos = [], [], [], []

    def record(t, f):
        mom = moments(f, d)
        times.append(t)
        mass.append(f.mass())
        res.append(float(np.mean(mom.lte_residual)))
        rhos.append(mom.rho)

    f = f0
    record(0.0, f)
    for i in range(1, n + 1):
        f = split_step(f, epsilon, d, step_dt)
        if callback is not None:
            callback(i, i * step_dt, f)
        if i in marks:
            record(t_end if i == n else i * step_dt, f)
    return KineticTrajectory(np.array(times), np.array(mass), np.array(res), rhos, f)


@dataclass(frozen=True, eq=False)
class ClosureReport:
    epsilon: float
    times: np.ndarray
    discrepancy: np.ndarray
    lte_residual: np.ndarray
    kinetic_rho: list = field(repr=False)
    macro_rho: list = field(repr=False)

    @property
    def final_discrepancy(self) -> float:
        return float(self.discrepancy[-1])


def closure_compare(f0: KineticField, epsilon: float, d: float, t_end: float,
                    b_spec=1.0, theta_spec=0.0, sample_times=None, dt: float | None = None,
                    coeffs: CoefficientTable | None = None) -> ClosureReport:
    """Run kinetic and macroscopic models from the same (ρ, Ω); L¹ gap of ρ in time.

    The macroscopic initial orientation is the direction of the kinetic
    mean velocity u (cells with u = 0 get angle 0).
    """
    mom = moments(f0, d)
    angle = np.arctan2(mom.u[..., 1], mom.u[..., 0])
    if coeffs is None:
        hi = max(2.0 * float(mom.rho.max()), 1.0)
        coeffs = build_coefficients(d, 2, b_spec, theta_spec, (1e-3, hi))
    times = sorted({float(t) for t in ([] if sample_times is None else sample_times) if 0 < t < t_end} | {float(t_end)})
    kin = run(f0, epsilon, d, t_end, dt=dt, record_times=times)
    # compare at the times the kinetic run actually reached
    mac = macro_run(MacroFields(mom.rho, angle), coeffs, t_end, record_times=list(kin.times[1:-1]))
    cell = f0.dx**f0.dim
    gaps = [float(np.sum(np.abs(kr - ms.rho)) * cell) for kr, ms in zip(kin.rho, mac.states)]
    return ClosureReport(
        epsilon=epsilon,
        times=kin.times,
        discrepancy=np.array(gaps),
        lte_residual=kin.mean_lte_residual,
        kinetic_rho=kin.rho,
        macro_rho=[s.rho for s in mac.states],
    )
