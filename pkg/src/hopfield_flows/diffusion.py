"""The stochastic Hopfield network ("diffusion machine").

Sample paths follow the Ito SDE, coordinate by coordinate,

    dx_i = (-g^ii(x_i) df/dx_i + T d g^ii/dx_i) dt + sqrt(2 T g^ii(x_i)) dw_i,

whose density evolves by the Fokker-Planck equation
rho_t = div(G^{-1} (rho grad f + T grad rho)) with Gibbs stationary density
exp(-f / T) / Z(T).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaln

from .activation import check_interior, clamp_interior


@dataclass
class DiffusionParams:
    act: object
    obj: object
    T: float
    h: float
    N: int
    seed: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("temperature T must be positive")
        if not self.h > 0:
            raise ValueError("time step h must be positive")
        if int(self.N) < 1:
            raise ValueError("particle count N must be >= 1")
        self.N = int(self.N)


@dataclass
class WeightedCloud:
    locations: np.ndarray
    masses: np.ndarray
    k: int = 0

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != (self.locations.shape[0],):
            raise ValueError("one mass per location is required")
        if np.any(self.masses < 0):
            raise ValueError("masses must be nonnegative")
        if abs(self.masses.sum() - 1.0) > 1e-12:
            raise ValueError("masses must sum to one")

    @property
    def N(self):
        return self.locations.shape[0]

    @classmethod
    def uniform(cls, locations):
        locations = np.atleast_2d(locations)
        n = locations.shape[0]
        return cls(locations, np.full(n, 1.0 / n))


def sde_drift_diffusion(act, obj, T, x):
    """Drift vector and per-coordinate diffusion coefficient at ``x``.

    ``T = 0`` is allowed here and gives the deterministic natural-gradient field.
    """
    x = check_interior(act.check_dim(x, "x"))
    g_inv = act.metric_inv(x)
    drift = -g_inv * obj.grad(x) + T * act.metric_inv_grad(x)
    return drift, np.sqrt(2.0 * T * g_inv)


def step_generator(seed, k):
    """Counter-based stream for time step ``k``: Philox keyed on (seed, k).

    Particle ``i`` always receives row ``i`` of the step's draw, so results do
    not depend on how particles are scheduled.
    """
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(k)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def em_step(act, obj, T, h, locations, rng):
    """Euler-Maruyama update of every particle, clamped into the open cube."""
    x = np.atleast_2d(locations)
    drift, diff = sde_drift_diffusion(act, obj, T, x)
    dw = rng.normal(0.0, math.sqrt(h), size=x.shape)
    return clamp_interior(x + h * drift + diff * dw)


# ---------------------------------------------------------------------------
# Gibbs density
# ---------------------------------------------------------------------------
def gibbs_density(obj, T, x):
    """Unnormalised stationary density exp(-f(x) / T)."""
    return np.exp(-np.asarray(obj.value(x)) / T)


def _tensor_grid(dim, resolution):
    nodes = np.linspace(0.0, 1.0, resolution)
    mesh = np.meshgrid(*([nodes] * dim), indexing="ij")
    return nodes, np.stack(mesh, axis=-1)


def gibbs_partition(obj, T, resolution=201, dim=None):
    """Z(T) by tensor-product trapezoid quadrature on [0, 1]^n, n <= 3."""
    dim = obj.dim if dim is None else dim
    if dim > 3:
        raise ValueError("gibbs_partition supports n <= 3")
    nodes, pts = _tensor_grid(dim, resolution)
    vals = gibbs_density(obj, T, pts)
    for _ in range(dim):
        vals = np.trapezoid(vals, nodes, axis=0)
    return float(vals)


def gibbs_free_energy(obj, T, resolution=401):
    """Free energy of the normalised Gibbs density, F = -T log Z(T)."""
    return -T * math.log(gibbs_partition(obj, T, resolution))


# ---------------------------------------------------------------------------
# kNN volumes and free energy on clouds
# ---------------------------------------------------------------------------
def _unit_ball_volume(n):
    return math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n + 1.0))


def knn_volumes(locations, k=8):
    """Volume attributed to each sample: |B(x_i, r_k)| / k.

    ``r_k`` is the distance to the k-th nearest other sample.  Near the faces
    of the unit cube the ball volume is scaled by the fraction of its bounding
    box inside the cube.  With equal masses 1/N, mass / volume is the usual
    (biased) kNN density estimate.
    """
    X = np.atleast_2d(locations)
    N, n = X.shape
    k = min(k, N - 1)
    if k < 1:
        return np.ones(N)
    dist, _ = cKDTree(X).query(X, k=k + 1)
    r = dist[:, k]
    inside = np.prod(
        (np.minimum(X + r[:, None], 1.0) - np.maximum(X - r[:, None], 0.0)) / (2 * r[:, None] + 1e-300),
        axis=1,
    )
    return _unit_ball_volume(n) * r**n * inside / k


def free_energy(cloud, obj, T, k=8):
    """Estimate of int f rho + T int rho log rho for a weighted cloud.

    Uses sum_i m_i f(x_i) + T sum_i m_i log(m_i / V_i) with V_i from
    :func:`knn_volumes`; the entropy part inherits the estimator's bias.
    """
    m = cloud.masses
    potential = float(m @ obj.value(cloud.locations))
    if T == 0:
        return potential
    _, counts = np.unique(cloud.locations, axis=0, return_counts=True)
    if np.sum(counts[counts > 1]) > 0.5 * cloud.N:
        warnings.warn("more than half of the cloud consists of duplicate points", RuntimeWarning)
    V = np.maximum(knn_volumes(cloud.locations, k), 1e-300)
    pos = m > 0
    entropy = float(np.sum(m[pos] * np.log(m[pos] / V[pos])))
    return potential + T * entropy


def knn_density(cloud, at, k=50):
    """Weighted kNN density of a cloud evaluated at arbitrary points.

    (sum of the masses of the k nearest samples) / |ball|, with the same face
    correction as :func:`knn_volumes`.
    """
    X = cloud.locations
    at = np.atleast_2d(at)
    n = X.shape[1]
    k = min(k, cloud.N)
    dist, idx = cKDTree(X).query(at, k=k)
    dist = dist.reshape(at.shape[0], k)
    idx = idx.reshape(at.shape[0], k)
    r = dist[:, -1]
    inside = np.prod(
        (np.minimum(at + r[:, None], 1.0) - np.maximum(at - r[:, None], 0.0)) / (2 * r[:, None] + 1e-300),
        axis=1,
    )
    return cloud.masses[idx].sum(axis=1) / (_unit_ball_volume(n) * r**n * inside)


# ---------------------------------------------------------------------------
# finite-volume Fokker-Planck solver (n = 1)
# ---------------------------------------------------------------------------
@dataclass
class FPKSolution:
    x: np.ndarray
    dx: float
    rho: np.ndarray
    t: float
    substeps: int
    dt: float
    free_energy: list = field(default_factory=list)
    mass: list = field(default_factory=list)


def discrete_free_energy(rho, f, T, dx):
    pos = rho > 0
    return float(np.sum(f * rho) * dx + T * np.sum(rho[pos] * np.log(rho[pos])) * dx)


def fpk_grid_solve(act, obj, T, cells, t_final, rho0=None, dt=None, track=True):
    """Conservative finite-volume solution of the 1-D Fokker-Planck equation.

    Interface fluxes use the Gibbs-symmetrised form

        J_{j+1/2} = -T g^{-1}_{j+1/2} M_{j+1/2} (rho_{j+1}/M_{j+1} - rho_j/M_j) / dx

    with M = exp(-f / T) and M_{j+1/2} the geometric mean, and zero flux
    through both ends.  The Gibbs density is then an exact discrete steady
    state.  Time stepping is explicit Euler; ``dt`` is reduced automatically
    so that every step is a Markov (nonnegative, mass-preserving) update,
    which makes the discrete free energy non-increasing.
    """
    if act.dim != 1:
        raise ValueError("fpk_grid_solve supports n = 1 only")
    if cells < 200:
        raise ValueError("use at least 200 cells")
    if not T > 0:
        raise ValueError("T must be positive")
    dx = 1.0 / cells
    x = (np.arange(cells) + 0.5) * dx
    faces = np.arange(1, cells) * dx
    f = np.asarray(obj.value(x[:, None]), dtype=float)
    logM = -(f - f.min()) / T
    M = np.exp(logM)
    Mface = np.exp(0.5 * (logM[:-1] + logM[1:]))
    g_inv_face = act.metric_inv(faces[:, None])[:, 0]
    # coefficient of (rho_{j+1}/M_{j+1} - rho_j/M_j) in the face flux
    w = T * g_inv_face * Mface / dx**2
    up = w / M[1:]  # weight on rho_{j+1} in cell j
    down = w / M[:-1]  # weight on rho_j leaving towards j+1
    out_rate = np.zeros(cells)
    out_rate[:-1] += down
    out_rate[1:] += up
    dt_cfl = 1.0 / out_rate.max()
    if dt is None or dt > dt_cfl:
        dt = dt_cfl
    substeps = max(1, int(math.ceil(t_final / dt - 1e-12)))
    dt = t_final / substeps

    if rho0 is None:
        rho = np.ones(cells)
    else:
        rho = np.asarray(rho0(x) if callable(rho0) else rho0, dtype=float).copy()
    rho /= rho.sum() * dx
    sol = FPKSolution(x=x, dx=dx, rho=rho, t=0.0, substeps=substeps, dt=dt)
    if track:
        sol.free_energy.append(discrete_free_energy(rho, f, T, dx))
        sol.mass.append(float(rho.sum() * dx))
    stay = 1.0 - dt * out_rate
    for _ in range(substeps):
        new = stay * rho
        new[:-1] += dt * up * rho[1:]
        new[1:] += dt * down * rho[:-1]
        rho = new
        sol.rho = rho
        if track:
            sol.free_energy.append(discrete_free_energy(rho, f, T, dx))
            sol.mass.append(float(rho.sum() * dx))
    sol.t = t_final
    return sol


def gibbs_grid_density(obj, T, x):
    """Normalised Gibbs density on a uniform 1-D cell grid."""
    f = np.asarray(obj.value(np.asarray(x)[:, None]), dtype=float)
    M = np.exp(-(f - f.min()) / T)
    return M / (M.sum() * (x[1] - x[0]))
