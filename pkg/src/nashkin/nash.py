"""Nash equilibria of the mean-field game.

An equilibrium is a fixed point f = M_{Φ_f} of the Gibbs map
M_Φ = exp(-Φ/d) / Z_Φ; equivalently its chemical potential
μ_f = Φ_f + d ln f is constant on Y.  For the herding cost on the sphere
S^{n-1} the fixed points are von Mises-Fisher densities whose
concentration κ solves the compatibility equation c(κ) = d_eff κ, where
c is the order parameter (mean alignment) of the VMF law.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .cost import CostKind, Herding, chemical_potential, cost_values
from .errors import DomainError, NonConvergenceError, StructuralError
from .manifold import (
    Circle,
    GridFunction,
    Interval,
    ManifoldGrid,
    SphereAxisymmetric,
    TwoPoint,
    integrate_values,
    is_density,
)

# Gauss-Legendre rule for the polar-angle integrals of the order parameter
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(200)
# e^{-40} relative tail is dropped when truncating the polar range
_TAIL_EXPONENT = 40.0
KAPPA_LOWER = 1e-6


def _gibbs_values(grid: ManifoldGrid, phi: np.ndarray, d: float):
    shift = np.min(phi, axis=-1, keepdims=True)
    e = np.exp(-(phi - shift) / d)
    z_shifted = integrate_values(grid, e)
    density = e / np.expand_dims(z_shifted, -1)
    log_z = -shift[..., 0] / d + np.log(z_shifted)
    return density, log_z


def gibbs_with_partition(phi: GridFunction, d: float):
    """Return (M_Φ, ln Z_Φ); the exponent is shifted by min Φ before exponentiating."""
    if not d > 0:
        raise DomainError(f"d must be > 0, got {d}")
    density, log_z = _gibbs_values(phi.grid, phi.values, d)
    return phi.with_values(density), float(log_z)


def gibbs(phi: GridFunction, d: float) -> GridFunction:
    return gibbs_with_partition(phi, d)[0]


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    density: GridFunction
    chemical_constant: float
    partition: float
    iterations: int
    residual: float
    increments: tuple = field(default=(), repr=False)


def _chemical_residual(kind, grid, h, d):
    phi_h = cost_values(kind, grid, h)
    _, log_z = _gibbs_values(grid, phi_h, d)
    constant = -d * float(log_z)
    mu = phi_h + d * np.log(h)
    return constant, float(log_z), float(np.max(np.abs(mu - constant)))


def fixed_point(
    kind: CostKind,
    d: float,
    init: GridFunction,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> EquilibriumSolution:
    """Damped self-consistent iteration f <- (1-α) f + α M_{Φ_f}.

    Stops once the undamped increment ‖M_{Φ_f} - f‖_{L¹} is below ``tol`` and
    the chemical potential of the returned density M_{Φ_f} deviates from
    K = -d ln Z by at most ``tol`` in sup norm.

    Parameters
    ----------
    kind
        Cost model defining Φ_f.
    d
        Noise level (> 0).
    init
        Starting density.  In the bistable herding regime the limit direction
        is inherited from the mean vector of ``init``.
    damping
        α in (0, 1].
    tol, max_iter
        Stopping tolerance and iteration budget.

    Raises
    ------
    NonConvergenceError
        When ``max_iter`` updates do not reach the tolerance.
    """
    if not d > 0:
        raise DomainError(f"d must be > 0, got {d}")
    if not 0.0 < damping <= 1.0:
        raise DomainError(f"damping must lie in (0, 1], got {damping}")
    if not is_density(init, tol=1e-8):
        raise DomainError("fixed_point needs a density as initial guess")
    grid = init.grid
    f = init.values / integrate_values(grid, init.values)
    increments = []
    for it in range(max_iter + 1):
        g, _ = _gibbs_values(grid, cost_values(kind, grid, f), d)
        inc = float(np.abs(g - f) @ grid.weights)
        increments.append(inc)
        if inc < tol:
            constant, log_z, residual = _chemical_residual(kind, grid, g, d)
            if residual <= tol:
                return EquilibriumSolution(
                    density=GridFunction(grid, g),
                    chemical_constant=constant,
                    partition=math.exp(log_z),
                    iterations=it,
                    residual=residual,
                    increments=tuple(increments),
                )
        if it == max_iter:
            break
        f = (1.0 - damping) * f + damping * g
    raise NonConvergenceError(
        f"fixed point did not converge in {max_iter} iterations (last L1 increment {inc:.3e});"
        " retry with smaller damping",
        residual=inc,
        iterations=max_iter,
    )


def _check_kappa(kappa):
    k = np.asarray(kappa, dtype=float)
    if np.any(~np.isfinite(k)) or np.any(k < 0):
        raise DomainError("kappa must be finite and >= 0")
    return k


def _polar_quadrature(k: np.ndarray, n: int):
    """Return (∫ e^{κ(cosθ-1)} cosθ s dθ, ∫ e^{κ(cosθ-1)} s dθ), s = sin^{n-2}θ."""
    with np.errstate(divide="ignore"):
        ratio = _TAIL_EXPONENT / k
    top = np.where(ratio < 2.0, np.arccos(np.clip(1.0 - ratio, -1.0, 1.0)), np.pi)
    half = 0.5 * top[..., None]
    theta = half * (_GL_NODES + 1.0)
    weights = half * _GL_WEIGHTS
    cos = np.cos(theta)
    e = weights * np.exp(k[..., None] * (cos - 1.0))
    if n > 2:
        e = e * np.sin(theta) ** (n - 2)
    return np.sum(e * cos, axis=-1), np.sum(e, axis=-1)


def order_parameter(kappa, n: int):
    """Mean alignment c(κ) = ∫ cosθ e^{κcosθ} sin^{n-2}θ dθ / ∫ e^{κcosθ} sin^{n-2}θ dθ.

    ``tanh κ`` for n = 1.  The factor e^κ is cancelled analytically and the
    polar range is truncated where the integrand falls below e^{-40} of its
    peak, so large κ stays accurate.  Accepts scalars or arrays.
    """
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    k = _check_kappa(kappa)
    if n == 1:
        out = np.tanh(k)
    else:
        num, den = _polar_quadrature(k, n)
        out = np.where(k == 0.0, 0.0, num / den)
    return float(out) if np.ndim(out) == 0 else out


def _sphere_log_area(n: int) -> float:
    # ln ∫_0^π sin^{n-2}θ dθ
    return 0.5 * math.log(math.pi) + gammaln((n - 1) / 2.0) - gammaln(n / 2.0)


def vmf_log_partition(kappa, n: int):
    """ln Z_κ with Z_κ = ∫ e^{κ y·Ω} dy for the normalized measure on S^{n-1}."""
    k = _check_kappa(kappa)
    if n == 1:
        out = np.logaddexp(k, -k) - math.log(2.0)
    else:
        _, den = _polar_quadrature(k, n)
        out = np.where(k == 0.0, 0.0, k + np.log(den) - _sphere_log_area(n))
    return float(out) if np.ndim(out) == 0 else out


class Regime(str, enum.Enum):
    UNIFORM_ONLY = "UniformOnly"
    BISTABLE = "Bistable"


@dataclass(frozen=True)
class PhaseDiagnosis:
    regime: Regime
    kappa_d: float
    critical_noise: float


@dataclass(frozen=True, eq=False)
class VmfEquilibrium:
    kappa: float
    omega: np.ndarray
    order: float
    partition: float


def concentration(d_eff, n: int):
    """Non-trivial root κ_d of c(κ) = d_eff κ (0 where d_eff ≥ 1/n); vectorized.

    Bisection on [1e-6, max(50, 4/d_eff)] run until the bracket stops
    shrinking in floating point.
    """
    d = np.asarray(d_eff, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("d_eff must be > 0")
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    kappa = np.zeros_like(d)
    active = d < 1.0 / n
    if np.any(active):
        da = d[active]
        lo = np.full_like(da, KAPPA_LOWER)
        hi = np.maximum(50.0, 4.0 / da)
        # roots below the lower bracket leave a residual under 1e-6 * |1/n - d|
        tiny = order_parameter(lo, n) - da * lo <= 0.0
        while True:
            mid = 0.5 * (lo + hi)
            moving = (mid > lo) & (mid < hi) & ~tiny
            if not np.any(moving):
                break
            up = order_parameter(mid, n) - da * mid > 0.0
            lo = np.where(moving & up, mid, lo)
            hi = np.where(moving & ~up, mid, hi)
        r_lo = np.abs(order_parameter(lo, n) - da * lo)
        r_hi = np.abs(order_parameter(hi, n) - da * hi)
        kappa[active] = np.where(tiny | (r_lo <= r_hi), lo, hi)
    return float(kappa[0]) if scalar else kappa


def kappa_solve(d_eff: float, n: int) -> PhaseDiagnosis:
    """Phase of the herding model at effective noise d_eff = d / s."""
    critical = 1.0 / n
    kappa_d = concentration(d_eff, n)
    regime = Regime.UNIFORM_ONLY if d_eff >= critical else Regime.BISTABLE
    return PhaseDiagnosis(regime=regime, kappa_d=kappa_d, critical_noise=critical)


def vmf_equilibrium(d_eff: float, n: int, omega=None) -> VmfEquilibrium:
    """Ground state VMF law (uniform in the UniformOnly regime)."""
    kappa = kappa_solve(d_eff, n).kappa_d
    omega = np.eye(n)[0] if omega is None else np.asarray(omega, dtype=float)
    omega = omega / np.linalg.norm(omega)
    return VmfEquilibrium(
        kappa=kappa,
        omega=omega,
        order=order_parameter(kappa, n),
        partition=math.exp(vmf_log_partition(kappa, n)),
    )


def grid_dimension(grid: ManifoldGrid) -> int:
    """n such that the grid discretizes S^{n-1}."""
    kind = grid.kind
    if isinstance(kind, TwoPoint):
        return 1
    if isinstance(kind, Circle):
        return 2
    if isinstance(kind, SphereAxisymmetric):
        return kind.dim
    raise StructuralError(f"{type(kind).__name__} is not a sphere")


def _direction_vector(grid: ManifoldGrid, direction):
    p = grid.ambient_dim
    if direction is None:
        return np.eye(p)[0]
    direction = np.atleast_1d(np.asarray(direction, dtype=float))
    if direction.shape == (1,) and p == 2:
        # an angle on the circle
        return np.array([math.cos(direction[0]), math.sin(direction[0])])
    if direction.shape != (p,):
        raise StructuralError(f"direction must have {p} components")
    return direction / np.linalg.norm(direction)


def vmf_density(grid: ManifoldGrid, kappa: float, direction=None) -> GridFunction:
    """Nodal VMF density exp(κ V(y)·Ω) normalized by the grid quadrature.

    ``direction`` is a unit vector in the ambient space, or an angle on the
    circle; it defaults to the first axis (θ = 0).
    """
    if isinstance(grid.kind, Interval):
        raise StructuralError("VMF densities live on spheres")
    kappa = float(_check_kappa(kappa))
    omega = _direction_vector(grid, direction)
    proj = grid.vectors @ omega
    e = np.exp(kappa * (proj - proj.max()))
    return GridFunction(grid, e / integrate_values(grid, e))


def ground_state(
    grid: ManifoldGrid,
    d: float,
    interaction_strength: float = 1.0,
    direction=None,
    tol: float = 1e-12,
) -> EquilibriumSolution:
    """Discrete herding equilibrium seeded by the continuum VMF(κ_d) law."""
    n = grid_dimension(grid)
    if interaction_strength <= 0:
        raise DomainError("ground_state needs a positive interaction strength")
    kappa = kappa_solve(d / interaction_strength, n).kappa_d
    seed = vmf_density(grid, kappa, direction)
    return fixed_point(Herding(interaction_strength), d, seed, damping=1.0, tol=tol)


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    constant: float
    deviation: float


def verify(kind: CostKind, f: GridFunction, d: float, tol: float = 1e-6) -> VerifyResult:
    """Nash test: accept when max μ_f - min μ_f < tol.

    A density with a non-positive node cannot be an equilibrium; that case
    raises DomainError rather than returning a rejection.
    """
    mu = chemical_potential(kind, f, d).values
    grid = f.grid
    constant = float(integrate_values(grid, mu) / grid.total_measure)
    deviation = float(mu.max() - mu.min())
    return VerifyResult(accepted=deviation < tol, constant=constant, deviation=deviation)
