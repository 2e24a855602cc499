"""Space-homogeneous mean-field dynamics ∂_t f = ∇_y·(f ∇_y Φ_f + d ∇_y f).

Both schemes use the exponentially fitted face flux of
:func:`nashkin.manifold.drift_diffusion_flux`, so nodal Gibbs densities are
exact discrete steady states.

``SEMI_IMPLICIT`` (default) freezes Φ at Φ_{f^n} and solves the fitted
drift-diffusion system implicitly::

    w (f^{n+1} - f^n) / dt = -div F(Φ_{f^n}, f^{n+1})

The matrix is a column diagonally dominant M-matrix with unit column sums,
so the step is a Markov operator with invariant measure M_{Φ_{f^n}}.
Besides positivity and exact mass conservation this gives a discrete
free-energy decay for every dt: F(f) = d H(f | M_n) - s|W_f - W_n|²/2 + const
and relative entropy contracts under such a step.

``EXPLICIT`` is forward Euler on the same flux, kept for cross-checks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _tridiag
from .cost import CostKind, FixedCost, Herding, cost_values, energy_report
from .errors import ConfigurationError, DomainError, SchemeInstabilityError, StructuralError
from .manifold import (
    GridFunction,
    ManifoldGrid,
    TwoPoint,
    bernoulli,
    drift_diffusion,
    integrate_values,
    tangential_gradient,
)

CLIP_TOLERANCE = 1e-12
SEMI_IMPLICIT_SAFETY = 0.25
EXPLICIT_SAFETY = 0.4


class Scheme(str, enum.Enum):
    EXPLICIT = "ExplicitFluxLimited"
    SEMI_IMPLICIT = "SemiImplicitDiffusion"


def max_cost_gradient(kind: CostKind, grid: ManifoldGrid) -> float:
    """Upper bound of |∇_y Φ_f| over all densities f."""
    if isinstance(kind, Herding):
        # |∇(V·W)| ≤ |W| ≤ max|V| on all supported grids
        return kind.interaction_strength * grid.max_vector_norm
    if isinstance(grid.kind, TwoPoint):
        v = kind.phi.values
        return float(abs(v[1] - v[0]) / grid.spacing)
    return float(np.max(np.abs(tangential_gradient(kind.phi).values)))


def stable_dt(kind: CostKind, grid: ManifoldGrid, d: float, scheme: Scheme = Scheme.SEMI_IMPLICIT):
    if scheme is Scheme.EXPLICIT:
        return EXPLICIT_SAFETY * grid.spacing**2 / (2.0 * d)
    g = max_cost_gradient(kind, grid)
    return math.inf if g == 0.0 else SEMI_IMPLICIT_SAFETY * grid.spacing / g


@dataclass(frozen=True, eq=False)
class HomogeneousRunConfig:
    """Run parameters; the step bound is checked against ``grid`` on construction."""

    kind: CostKind
    d: float
    dt: float
    t_end: float
    grid: ManifoldGrid
    record_every: int = 1
    scheme: Scheme = Scheme.SEMI_IMPLICIT

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.d > 0:
            raise ConfigurationError(f"d must lie in (0, inf), got {self.d}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must lie in (0, inf), got {self.dt}")
        if not self.t_end >= 0:
            raise ConfigurationError(f"t_end must be >= 0, got {self.t_end}")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")
        if isinstance(self.kind, FixedCost) and self.kind.phi.grid.size != self.grid.size:
            raise StructuralError("fixed cost does not live on the run grid")
        bound = stable_dt(self.kind, self.grid, self.d, self.scheme)
        if self.dt > bound * (1 + 1e-12):
            raise ConfigurationError(
                f"dt = {self.dt} exceeds the {self.scheme.value} bound {bound:.6g}"
            )

    @property
    def n_steps(self) -> int:
        return max(0, math.ceil(self.t_end / self.dt - 1e-9))


def _face_coefficients(grid, phi, d):
    # F_k = alpha_k f_k - beta_k f_{k+1}
    if grid.periodic:
        jump = np.roll(phi, -1, axis=-1) - phi
    else:
        jump = np.diff(phi, axis=-1)
    x = jump / d
    scale = d * grid.conductance
    return scale * bernoulli(x), scale * bernoulli(-x)


def semi_implicit_values(grid: ManifoldGrid, phi, values, d: float, dt: float):
    """One implicit fitted-flux step with frozen Φ; batched over leading axes."""
    alpha, beta = _face_coefficients(grid, np.asarray(phi, float), d)
    w = grid.weights
    batch = np.shape(values)[:-1]
    alpha = np.broadcast_to(alpha, batch + alpha.shape[-1:])
    beta = np.broadcast_to(beta, batch + beta.shape[-1:])
    if grid.periodic:
        diag = w + dt * (alpha + np.roll(beta, 1, axis=-1))
        lower = -dt * np.roll(alpha, 1, axis=-1)
        upper = -dt * beta
    else:
        n = grid.size
        pad = np.zeros(batch + (1,))
        diag = w + dt * (np.concatenate([alpha, pad], -1) + np.concatenate([pad, beta], -1))
        lower = -dt * np.concatenate([pad, alpha], -1)
        upper = -dt * np.concatenate([beta, pad], -1)
        if n == 2:
            # two-point set: solve the 2x2 system directly
            a, b = alpha[..., 0], beta[..., 0]
            f0, f1 = values[..., 0] * w[0], values[..., 1] * w[1]
            d0, d1 = diag[..., 0], diag[..., 1]
            det = d0 * d1 - dt * dt * a * b
            x0 = (d1 * f0 + dt * b * f1) / det
            x1 = (d0 * f1 + dt * a * f0) / det
            return np.stack([x0, x1], axis=-1)
    return _tridiag.solve(lower, diag, upper, w * values, periodic=grid.periodic)


def explicit_values(grid: ManifoldGrid, phi, values, d: float, dt: float):
    return values + dt * drift_diffusion(grid, phi, values, d)


def clip_negative(grid: ManifoldGrid, values: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Clip values in [-1e-12, 0) to zero and restore ``mass``; fail on worse."""
    low = float(np.min(values))
    if low >= 0.0:
        return values
    if low < -CLIP_TOLERANCE:
        raise SchemeInstabilityError(
            f"density reached {low:.3e} < -{CLIP_TOLERANCE:g}; reduce dt"
        )
    clipped = np.maximum(values, 0.0)
    return clipped * np.expand_dims(mass / integrate_values(grid, clipped), -1)


def advance_values(kind: CostKind, grid: ManifoldGrid, values, d, dt, scheme=Scheme.SEMI_IMPLICIT):
    """Step raw nodal values (batched); Φ is refreshed from ``values`` first."""
    phi = cost_values(kind, grid, values)
    if scheme is Scheme.EXPLICIT:
        new = explicit_values(grid, phi, values, d, dt)
    else:
        new = semi_implicit_values(grid, phi, values, d, dt)
    return clip_negative(grid, new, integrate_values(grid, values))


def step(f: GridFunction, cfg: HomogeneousRunConfig, dt: float | None = None) -> GridFunction:
    """Advance a density by one step of ``cfg.scheme``."""
    if f.grid.size != cfg.grid.size:
        raise StructuralError("density and run config use different grids")
    if np.any(f.values < 0):
        raise DomainError("step needs a non-negative density")
    dt = cfg.dt if dt is None else dt
    return f.with_values(advance_values(cfg.kind, f.grid, f.values, cfg.d, dt, cfg.scheme))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    times: np.ndarray
    mass: np.ndarray
    free_energy: np.ndarray
    dissipation: np.ndarray
    order_norm: np.ndarray
    final_density: GridFunction
    min_value: np.ndarray = None

    def rows(self):
        for i in range(len(self.times)):
            yield {
                "t": self.times[i],
                "mass": self.mass[i],
                "free_energy": self.free_energy[i],
                "dissipation": self.dissipation[i],
                "order_norm": self.order_norm[i],
            }


def run(f0: GridFunction, cfg: HomogeneousRunConfig, callback=None) -> TrajectoryRecord:
    """Integrate to ``cfg.t_end`` in equal steps no longer than ``cfg.dt``.

    Diagnostics are recorded at t = 0, every ``record_every`` steps and at
    the final time.  ``callback(step_index, t, f)`` is invoked after every step.
    """
    n = cfg.n_steps
    dt = cfg.t_end / n if n else 0.0
    f = f0
    rec = {k: [] for k in ("t", "mass", "F", "D", "W", "min")}

    def record(t, g):
        rep = energy_report(cfg.kind, g, cfg.d)
        rec["t"].append(t)
        rec["mass"].append(float(integrate_values(g.grid, g.values)))
        rec["F"].append(rep.free_energy)
        rec["D"].append(rep.dissipation)
        rec["W"].append(rep.order_norm)
        rec["min"].append(float(g.values.min()))

    record(0.0, f)
    for i in range(1, n + 1):
        f = step(f, cfg, dt)
        if callback is not None:
            callback(i, i * dt, f)
        if i % cfg.record_every == 0 or i == n:
            record(cfg.t_end if i == n else i * dt, f)
    return TrajectoryRecord(
        times=np.array(rec["t"]),
        mass=np.array(rec["mass"]),
        free_energy=np.array(rec["F"]),
        dissipation=np.array(rec["D"]),
        order_norm=np.array(rec["W"]),
        final_density=f,
        min_value=np.array(rec["min"]),
    )


def dual_quadratic_form(kind: CostKind, f: GridFunction, g: GridFunction, d: float) -> float:
    """∫ Q(f) g / M_{Φ_f} dy with the discrete operator; ≤ 0 when g = f."""
    grid = f.grid
    phi = cost_values(kind, grid, f.values)
    q = drift_diffusion(grid, phi, f.values, d)
    shift = phi.min()
    gibbs_unnorm = np.exp(-(phi - shift) / d)
    z = integrate_values(grid, gibbs_unnorm)
    return float(integrate_values(grid, q * g.values * z / gibbs_unnorm))
