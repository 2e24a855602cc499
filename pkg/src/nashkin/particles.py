"""N-agent herding dynamics on the decision sphere S^{n-1}.

Each agent moves in configuration space with velocity equal to its
decision, dX_j = Y_j dt, while the decision follows the projected
Stratonovich SDE

    dY_j = P_{Y_j} ∘ (s W_N dt + sqrt(2d) dB_j),   W_N = (1/N) Σ_k Y_k,

P_y being the projection onto the tangent space at y.  The SDE is
integrated with the Euler-Heun predictor-corrector (which converges to the
Stratonovich solution) and each step ends by renormalizing Y_j to unit
length.

Randomness comes from numpy's Philox counter-based generator; one step
draws a single (N, n) block of normals, so the stream does not depend on
how the arithmetic is scheduled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, StructuralError
from .manifold import Circle, GridFunction, ManifoldGrid, SphereAxisymmetric

RNG_ALGORITHM = "Philox"


class Kernel(str, enum.Enum):
    GLOBAL = "Global"
    NONE = "None"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    decisions: np.ndarray
    rng: np.random.Generator
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.decisions = np.asarray(self.decisions, dtype=float)
        if self.decisions.ndim != 2 or self.positions.shape != self.decisions.shape:
            raise StructuralError("positions and decisions must both have shape (N, n)")

    @property
    def n_agents(self) -> int:
        return self.decisions.shape[0]

    @property
    def dim(self) -> int:
        return self.decisions.shape[1]

    def mean_decision(self) -> np.ndarray:
        return self.decisions.mean(axis=0)

    def norm_error(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.decisions, axis=1) - 1.0)))


@dataclass(frozen=True)
class ParticleRunConfig:
    """Run parameters.  With d = 0 the interaction energy -|W_N|²/2 is
    non-increasing per step for dt ≤ 0.2."""

    n_agents: int
    d: float
    dt: float = 1e-3
    t_end: float = 1.0
    interaction_strength: float = 1.0
    spatial_kernel: Kernel = Kernel.GLOBAL
    seed: int = 0
    dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "spatial_kernel", Kernel(self.spatial_kernel))
        if self.n_agents < 1:
            raise ConfigurationError(f"n_agents must be >= 1, got {self.n_agents}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must lie in (0, inf), got {self.dt}")
        if not self.d >= 0:
            raise ConfigurationError(f"d must lie in [0, inf), got {self.d}")
        if self.dim < 2:
            raise ConfigurationError("particle decisions need a sphere of dimension n >= 2")

    @property
    def n_steps(self) -> int:
        return max(0, int(np.ceil(self.t_end / self.dt - 1e-9)))


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def sample_uniform(rng, n_agents: int, dim: int) -> np.ndarray:
    return _unit(rng.standard_normal((n_agents, dim)))


def sample_vmf(rng, n_agents: int, dim: int, kappa: float, direction=None) -> np.ndarray:
    """Draw VMF(κ, Ω) decisions (uniform for κ = 0)."""
    omega = np.eye(dim)[0] if direction is None else _unit(np.asarray(direction, float))
    if kappa == 0:
        return sample_uniform(rng, n_agents, dim)
    if dim == 2:
        theta = rng.vonmises(0.0, kappa, size=n_agents)
        perp = np.array([-omega[1], omega[0]])
        return np.cos(theta)[:, None] * omega + np.sin(theta)[:, None] * perp
    # cosine t = y·Ω has density ∝ e^{κt} (1-t²)^{(n-3)/2}: invert the
    # exponential factor, reject on the other
    out = np.empty(0)
    while out.size < n_agents:
        u = rng.random(n_agents)
        t = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
        if dim > 3:
            t = t[rng.random(n_agents) < (1.0 - t * t) ** ((dim - 3) / 2.0)]
        out = np.concatenate([out, t])
    t = out[:n_agents]
    tangent = rng.standard_normal((n_agents, dim))
    tangent -= (tangent @ omega)[:, None] * omega
    tangent = _unit(tangent)
    return t[:, None] * omega + np.sqrt(np.clip(1.0 - t * t, 0.0, None))[:, None] * tangent


def initial_ensemble(cfg: ParticleRunConfig, decisions=None, kappa: float = 0.0, direction=None):
    """Ensemble at the origin with given, VMF-sampled or uniform decisions."""
    rng = make_rng(cfg.seed)
    if decisions is None:
        decisions = sample_vmf(rng, cfg.n_agents, cfg.dim, kappa, direction)
    decisions = _unit(np.asarray(decisions, dtype=float))
    return ParticleEnsemble(np.zeros_like(decisions), decisions, rng, 0.0)


def _project(base, v):
    # tangent projection at base, valid for non-unit base points
    return v - (np.sum(base * v, axis=-1) / np.sum(base * base, axis=-1))[..., None] * base


def _mean_field(decisions, strength, kernel):
    if kernel is Kernel.NONE:
        return np.zeros(decisions.shape[1])
    return strength * decisions.mean(axis=0)


def force(ensemble: ParticleEnsemble, j: int, interaction_strength: float = 1.0,
          kernel: Kernel = Kernel.GLOBAL) -> np.ndarray:
    """Steepest-descent direction P_{Y_j}(s W_N) for agent j."""
    y = ensemble.decisions
    return _project(y[j], _mean_field(y, interaction_strength, Kernel(kernel)))


def forces(ensemble: ParticleEnsemble, interaction_strength: float = 1.0,
           kernel: Kernel = Kernel.GLOBAL) -> np.ndarray:
    y = ensemble.decisions
    return _project(y, _mean_field(y, interaction_strength, Kernel(kernel)))


def step(ensemble: ParticleEnsemble, cfg: ParticleRunConfig) -> ParticleEnsemble:
    """One Euler-Heun step of the projected SDE plus renormalization."""
    y = ensemble.decisions
    dt = cfg.dt
    if cfg.d > 0:
        kick = np.sqrt(2.0 * cfg.d * dt) * ensemble.rng.standard_normal(y.shape)
    else:
        kick = np.zeros_like(y)
    s, kernel = cfg.interaction_strength, cfg.spatial_kernel
    inc0 = _project(y, _mean_field(y, s, kernel) * dt + kick)
    pred = y + inc0
    inc1 = _project(pred, _mean_field(pred, s, kernel) * dt + kick)
    new_y = _unit(y + 0.5 * (inc0 + inc1))
    return ParticleEnsemble(ensemble.positions + y * dt, new_y, ensemble.rng, ensemble.time + dt)


@dataclass(frozen=True, eq=False)
class ParticleRecord:
    times: np.ndarray
    order_norm: np.ndarray
    mean_vector: np.ndarray
    norm_error: np.ndarray
    final: ParticleEnsemble = field(repr=False)

    @property
    def free_energy(self) -> np.ndarray:
        # interaction energy of the noiseless dynamics
        return -0.5 * self.order_norm**2

    def time_average(self, t_start: float, t_stop: float = np.inf) -> float:
        mask = (self.times >= t_start) & (self.times <= t_stop)
        return float(self.order_norm[mask].mean())


def run(cfg: ParticleRunConfig, ensemble: ParticleEnsemble | None = None,
        record_every: int = 1, callback=None) -> ParticleRecord:
    ens = initial_ensemble(cfg) if ensemble is None else ensemble
    times, orders, means, errors = [], [], [], []

    def record(e):
        w = e.mean_decision()
        times.append(e.time)
        orders.append(float(np.linalg.norm(w)))
        means.append(w)
        errors.append(e.norm_error())

    record(ens)
    n = cfg.n_steps
    for i in range(1, n + 1):
        ens = step(ens, cfg)
        if callback is not None:
            callback(i, ens)
        if i % record_every == 0 or i == n:
            record(ens)
    return ParticleRecord(
        times=np.array(times),
        order_norm=np.array(orders),
        mean_vector=np.array(means),
        norm_error=np.array(errors),
        final=ens,
    )


def empirical_density(ensemble: ParticleEnsemble, grid: ManifoldGrid, axis=None) -> GridFunction:
    """Histogram of decisions onto the grid's control volumes, as a density.

    On the circle the bins are centred at the node angles.  On the
    axisymmetric sphere the polar angle is measured from ``axis`` (default
    e1).
    """
    y = ensemble.decisions
    n_cells = grid.size
    if isinstance(grid.kind, Circle):
        if ensemble.dim != 2:
            raise StructuralError("circle histogram needs planar decisions")
        angle = np.mod(np.arctan2(y[:, 1], y[:, 0]), 2.0 * np.pi)
        cells = np.floor(angle / grid.spacing + 0.5).astype(int) % n_cells
    elif isinstance(grid.kind, SphereAxisymmetric):
        if ensemble.dim != grid.kind.dim:
            raise StructuralError("sphere grid dimension does not match the decisions")
        omega = np.eye(ensemble.dim)[0] if axis is None else _unit(np.asarray(axis, float))
        theta = np.arccos(np.clip(y @ omega, -1.0, 1.0))
        cells = np.clip(np.floor(theta / grid.spacing + 0.5).astype(int), 0, n_cells - 1)
    else:
        raise StructuralError(f"no particle histogram on {type(grid.kind).__name__}")
    counts = np.bincount(cells, minlength=n_cells)
    return GridFunction(grid, counts / (ensemble.n_agents * grid.weights))
