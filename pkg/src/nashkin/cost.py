"""Cost functionals, chemical potential and the free-energy ledger.

Two cost models are provided.  ``FixedCost`` is a density-independent
potential Φ(y).  ``Herding`` is the alignment cost Φ_f(y) = -s V(y)·W_f,
W_f = ∫ V f dy, which derives from the potential energy U(f) = -s|W_f|²/2
and therefore makes the game a potential game with free energy
F = d∫ f ln f + U.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, StructuralError
from .manifold import (
    GridFunction,
    ManifoldGrid,
    dissipation_values,
    integrate_values,
    mean_vector_values,
)


@dataclass(frozen=True, eq=False)
class FixedCost:
    phi: GridFunction

    def __post_init__(self):
        if not np.all(np.isfinite(self.phi.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.phi.values))[0])
            raise DomainError(f"fixed cost is not finite at node {bad}")


@dataclass(frozen=True)
class Herding:
    interaction_strength: float = 1.0

    def __post_init__(self):
        if not self.interaction_strength >= 0.0:
            raise DomainError(
                f"interaction_strength must be >= 0, got {self.interaction_strength}"
            )


CostKind = Union[FixedCost, Herding]


def cost_values(kind: CostKind, grid: ManifoldGrid, values: np.ndarray) -> np.ndarray:
    """Φ_f at the nodes; ``values`` may carry leading batch axes.

    For ``Herding`` the mean field is computed from ``values`` as given, so
    an unnormalized f(x, ·) of mass ρ yields the local cost -ρ y·W̃_ν.
    """
    if isinstance(kind, FixedCost):
        if kind.phi.grid.size != grid.size:
            raise StructuralError("fixed cost lives on a different grid")
        return np.broadcast_to(kind.phi.values, np.shape(values)).copy()
    w = mean_vector_values(grid, values)
    return -kind.interaction_strength * (w @ grid.vectors.T)


def cost_field(kind: CostKind, f: GridFunction) -> GridFunction:
    return f.with_values(cost_values(kind, f.grid, f.values))


def _check_positive(f: GridFunction):
    bad = np.flatnonzero(~(f.values > 0.0))
    if bad.size:
        k = int(bad[0])
        raise DomainError(
            f"density must be strictly positive; node {k} has value {f.values[k]!r}"
        )


def chemical_potential(kind: CostKind, f: GridFunction, d: float) -> GridFunction:
    """μ_f = Φ_f + d ln f, nodewise.  Raises DomainError where f ≤ 0."""
    _check_positive(f)
    return f.with_values(cost_values(kind, f.grid, f.values) + d * np.log(f.values))


@dataclass(frozen=True, eq=False)
class EnergyReport:
    entropy: float
    potential_energy: float
    free_energy: float
    social_cost: float
    order_vector: np.ndarray
    dissipation: float

    @property
    def order_norm(self) -> float:
        return float(np.linalg.norm(self.order_vector))


def entropy(f: GridFunction, d: float) -> float:
    """d ∫ f ln f with 0 ln 0 = 0."""
    return float(d * integrate_values(f.grid, xlogy(f.values, f.values)))


def energy_report(kind: CostKind, f: GridFunction, d: float) -> EnergyReport:
    grid = f.grid
    w = mean_vector_values(grid, f.values)
    phi = cost_values(kind, grid, f.values)
    s_f = entropy(f, d)
    if isinstance(kind, Herding):
        strength = kind.interaction_strength
        w2 = float(w @ w)
        potential = -0.5 * strength * w2
        social = s_f - strength * w2
    else:
        potential = float(integrate_values(grid, phi * f.values))
        social = s_f + potential
    return EnergyReport(
        entropy=s_f,
        potential_energy=potential,
        free_energy=s_f + potential,
        social_cost=social,
        order_vector=w,
        dissipation=float(dissipation_values(grid, phi, f.values, d)),
    )
