"""Discretized decision manifolds.

Four decision spaces are supported: the circle S^1, the two-point set
{-1, +1}, the unit sphere S^{n-1} reduced to the polar angle under
axial symmetry, and a closed interval with zero-flux ends.

Every grid is a vertex-centred finite-volume discretization: node ``k``
owns a control volume of measure ``weights[k]`` and neighbouring nodes
``k, k+1`` (cyclically on the circle) share a face with conductance
``conductance[k]`` (face measure divided by node distance).  The
Laplace-Beltrami operator, the drift-diffusion collision operator and the
dissipation functional are all written on this chain structure, so the
discrete divergence theorem holds exactly.

Measure conventions: the circle, the two-point set and the sphere carry
total measure one; the interval carries plain Lebesgue measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import StructuralError, UnsupportedOperationError

DEFAULT_CIRCLE_NODES = 256
DEFAULT_INTERVAL_NODES = 129
DEFAULT_SPHERE_NODES = 129


@dataclass(frozen=True)
class Circle:
    pass


@dataclass(frozen=True)
class TwoPoint:
    pass


@dataclass(frozen=True)
class SphereAxisymmetric:
    """S^{dim-1} in ℝ^dim, axisymmetric functions of the polar angle."""

    dim: int = 3

    def __post_init__(self):
        if self.dim < 3:
            raise StructuralError(f"SphereAxisymmetric needs dim >= 3, got {self.dim}")


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise StructuralError(
                f"Interval requires lower < upper, got [{self.lower}, {self.upper}]"
            )


ManifoldKind = Union[Circle, TwoPoint, SphereAxisymmetric, Interval]


@dataclass(frozen=True, eq=False)
class ManifoldGrid:
    """Nodes, control-volume weights and face conductances of a decision grid.

    Attributes
    ----------
    kind
        Which manifold is discretized.
    nodes
        Angle in [0, 2π) (circle), polar angle in [0, π] (sphere), abscissa
        (interval) or ±1 (two-point).
    weights
        Control-volume measures; they sum to the total measure of Y.
    spacing
        Grid step in arclength.  For the two-point set this is the step for
        which the flip generator reads ``(g(-y) - g(y)) / spacing**2``, i.e. 1.
    conductance
        Face measure over node distance for faces ``(k, k+1)``; length N on
        the (periodic) circle, N-1 otherwise.
    vectors
        Ambient decision vector V(y) per node, shape (N, p): (cos, sin) on the
        circle, the axial component cos θ on the sphere, y itself otherwise.
    """

    kind: ManifoldKind
    nodes: np.ndarray
    weights: np.ndarray
    spacing: float
    conductance: np.ndarray
    vectors: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def periodic(self) -> bool:
        return isinstance(self.kind, Circle)

    @property
    def total_measure(self) -> float:
        if isinstance(self.kind, Interval):
            return self.kind.upper - self.kind.lower
        return 1.0

    @property
    def ambient_dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def max_vector_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.vectors, axis=1)))

    def describe(self) -> dict:
        """JSON-friendly summary used in run manifests."""
        info = {"kind": type(self.kind).__name__, "nodes": self.size}
        if isinstance(self.kind, Interval):
            info.update(lower=self.kind.lower, upper=self.kind.upper)
        if isinstance(self.kind, SphereAxisymmetric):
            info.update(dim=self.kind.dim)
        return info


def circle(n_nodes: int = DEFAULT_CIRCLE_NODES) -> ManifoldGrid:
    if n_nodes < 3:
        raise StructuralError("circle grid needs at least 3 nodes")
    h = 2.0 * np.pi / n_nodes
    nodes = h * np.arange(n_nodes)
    weights = np.full(n_nodes, 1.0 / n_nodes)
    # face measure 1/(2π) in the normalized measure
    conductance = np.full(n_nodes, 1.0 / (2.0 * np.pi * h))
    vectors = np.column_stack([np.cos(nodes), np.sin(nodes)])
    return ManifoldGrid(Circle(), nodes, weights, h, conductance, vectors)


def two_point() -> ManifoldGrid:
    nodes = np.array([-1.0, 1.0])
    weights = np.array([0.5, 0.5])
    return ManifoldGrid(TwoPoint(), nodes, weights, 1.0, np.array([0.5]), nodes[:, None].copy())


def interval(lower: float, upper: float, n_nodes: int = DEFAULT_INTERVAL_NODES) -> ManifoldGrid:
    kind = Interval(float(lower), float(upper))
    if n_nodes < 3:
        raise StructuralError("interval grid needs at least 3 nodes")
    nodes = np.linspace(kind.lower, kind.upper, n_nodes)
    h = (kind.upper - kind.lower) / (n_nodes - 1)
    weights = np.full(n_nodes, h)
    weights[[0, -1]] = 0.5 * h
    conductance = np.full(n_nodes - 1, 1.0 / h)
    return ManifoldGrid(kind, nodes, weights, h, conductance, nodes[:, None].copy())


def _sin_power_antiderivative(t, m: int):
    # reduction: ∫sin^m = -sin^{m-1} cos / m + (m-1)/m ∫sin^{m-2}
    t = np.asarray(t, dtype=float)
    if m == 0:
        return t
    if m == 1:
        return -np.cos(t)
    return -np.sin(t) ** (m - 1) * np.cos(t) / m + (m - 1) / m * _sin_power_antiderivative(t, m - 2)


def sphere_axisymmetric(n_nodes: int = DEFAULT_SPHERE_NODES, dim: int = 3) -> ManifoldGrid:
    """Polar-angle grid on S^{dim-1} with the normalized (sin θ)^{dim-2} dθ measure."""
    kind = SphereAxisymmetric(dim)
    if n_nodes < 3:
        raise StructuralError("sphere grid needs at least 3 nodes")
    m = dim - 2
    h = np.pi / (n_nodes - 1)
    nodes = h * np.arange(n_nodes)
    faces = np.concatenate([[0.0], h * (np.arange(n_nodes - 1) + 0.5), [np.pi]])
    raw = np.diff(_sin_power_antiderivative(faces, m))
    total = raw.sum()
    weights = raw / total
    conductance = np.sin(faces[1:-1]) ** m / (total * h)
    return ManifoldGrid(kind, nodes, weights, h, conductance, np.cos(nodes)[:, None])


def default_grid(n: int, n_nodes: int | None = None) -> ManifoldGrid:
    """Decision grid for the sphere S^{n-1}: two-point, circle or axisymmetric sphere."""
    if n == 1:
        return two_point()
    if n == 2:
        return circle(n_nodes or DEFAULT_CIRCLE_NODES)
    if n >= 3:
        return sphere_axisymmetric(n_nodes or DEFAULT_SPHERE_NODES, dim=n)
    raise StructuralError(f"dimension must be >= 1, got {n}")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real values sampled at the nodes of a :class:`ManifoldGrid`."""

    grid: ManifoldGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] != self.grid.size:
            raise StructuralError(
                f"values of shape {values.shape} do not match a grid of {self.grid.size} nodes"
            )
        object.__setattr__(self, "values", values)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __len__(self):
        return self.grid.size


def integrate_values(grid: ManifoldGrid, values: np.ndarray) -> np.ndarray:
    """Quadrature along the last axis; broadcasts over leading axes."""
    return np.asarray(values) @ grid.weights


def integrate(g: GridFunction) -> float:
    """Σ_k weights_k · values_k."""
    return float(integrate_values(g.grid, g.values))


def mean_vector_values(grid: ManifoldGrid, values: np.ndarray) -> np.ndarray:
    """∫ V(y) f(y) dy along the last axis, returning shape (..., p)."""
    return (np.asarray(values) * grid.weights) @ grid.vectors


def mean_decision_vector(g: GridFunction) -> np.ndarray:
    """∫ y g(y) dy as an ambient vector (length 2 on the circle, length 1 otherwise)."""
    return mean_vector_values(g.grid, g.values)


def uniform_density(grid: ManifoldGrid) -> GridFunction:
    return GridFunction(grid, np.full(grid.size, 1.0 / grid.total_measure))


def delta_density(grid: ManifoldGrid, index: int) -> GridFunction:
    """Discrete Dirac mass at one node (value 1/weight there, zero elsewhere)."""
    values = np.zeros(grid.size)
    values[index] = 1.0 / grid.weights[index]
    return GridFunction(grid, values)


def normalized(g: GridFunction) -> GridFunction:
    return g.with_values(g.values / integrate(g))


def l1_distance(f: GridFunction, g: GridFunction) -> float:
    if f.grid is not g.grid and f.grid.size != g.grid.size:
        raise StructuralError("L1 distance between functions on different grids")
    return float(np.abs(f.values - g.values) @ f.grid.weights)


def is_density(g: GridFunction, tol: float = 1e-10) -> bool:
    return bool(np.all(g.values >= 0.0) and abs(integrate(g) - 1.0) <= tol)


def _edge_differences(grid: ManifoldGrid, values: np.ndarray) -> np.ndarray:
    if grid.periodic:
        return np.roll(values, -1, axis=-1) - values
    return np.diff(values, axis=-1)


def _divergence(grid: ManifoldGrid, flux: np.ndarray) -> np.ndarray:
    """Nodal divergence of face fluxes ``flux[k]`` oriented from node k to k+1."""
    if grid.periodic:
        net = flux - np.roll(flux, 1, axis=-1)
    else:
        pad = np.zeros(flux.shape[:-1] + (1,))
        net = np.concatenate([flux, pad], axis=-1) - np.concatenate([pad, flux], axis=-1)
    return net / grid.weights


def laplacian_values(grid: ManifoldGrid, values: np.ndarray) -> np.ndarray:
    return _divergence(grid, grid.conductance * _edge_differences(grid, values))


def laplace_beltrami(g: GridFunction) -> GridFunction:
    """Divergence-form 3-point Laplacian; the graph flip generator on {-1, +1}.

    Interval ends carry no face outward, which is the zero-flux condition.
    On the sphere the face areas carry the (sin θ)^{n-2} weight.
    """
    return g.with_values(laplacian_values(g.grid, g.values))


def tangential_gradient(g: GridFunction) -> GridFunction:
    """Second-order finite-difference derivative in arclength.

    Centred in the interior, periodic on the circle, one-sided second-order
    at interval ends and sphere poles.
    """
    grid = g.grid
    if isinstance(grid.kind, TwoPoint):
        raise UnsupportedOperationError("no tangential gradient on the two-point set")
    v, h = g.values, grid.spacing
    if grid.periodic:
        return g.with_values((np.roll(v, -1) - np.roll(v, 1)) / (2.0 * h))
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return g.with_values(out)


def evaluate(grid: ManifoldGrid, func) -> GridFunction:
    """Sample ``func(nodes)`` on the grid."""
    return GridFunction(grid, np.broadcast_to(func(grid.nodes), grid.nodes.shape).astype(float))


def bernoulli(x):
    """B(x) = x / (e^x - 1), with B(0) = 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = x / np.expm1(x)
    return np.where(x == 0.0, 1.0, out)


def _edge_potential_jump(grid: ManifoldGrid, phi: np.ndarray, d: float) -> np.ndarray:
    return _edge_differences(grid, np.asarray(phi, dtype=float)) / d


def drift_diffusion_flux(grid: ManifoldGrid, phi: np.ndarray, values: np.ndarray, d: float):
    """Exponentially fitted face flux of  -(f ∇Φ + d ∇f)  from node k to k+1.

    The flux vanishes identically on ``f ∝ exp(-Φ/d)``, so the discrete
    stationary states are exactly the nodal Gibbs densities.
    """
    x = _edge_potential_jump(grid, phi, d)
    if grid.periodic:
        nxt = np.roll(values, -1, axis=-1)
        cur = values
    else:
        nxt = values[..., 1:]
        cur = values[..., :-1]
    return d * grid.conductance * (bernoulli(x) * cur - bernoulli(-x) * nxt)


def drift_diffusion(grid: ManifoldGrid, phi: np.ndarray, values: np.ndarray, d: float):
    """Nodal ∇·(f ∇Φ + d ∇f) with zero flux through interval ends."""
    return -_divergence(grid, drift_diffusion_flux(grid, phi, values, d))


def dissipation_values(grid: ManifoldGrid, phi: np.ndarray, values: np.ndarray, d: float):
    """Face quadrature of ∫ f |∇μ|², μ = Φ + d ln f, paired with the fitted flux.

    Each face contributes  flux · (μ_k - μ_{k+1}) ≥ 0.  Faces touching a
    zero of f with a non-zero flux contribute +inf.
    """
    x = _edge_potential_jump(grid, phi, d)
    if grid.periodic:
        cur, nxt = values, np.roll(values, -1, axis=-1)
    else:
        cur, nxt = values[..., :-1], values[..., 1:]
    half = 0.5 * x
    a = cur * np.exp(-half)
    b = nxt * np.exp(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        shape = np.where(half == 0.0, 1.0, half / np.sinh(half))
        term = (a - b) * (np.log(a) - np.log(b))
    term = np.where(a == b, 0.0, term)
    return d * d * np.sum(grid.conductance * shape * term, axis=-1)
