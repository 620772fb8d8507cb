"""Entropic Wasserstein proximal (JKO) recursion on weighted point clouds.

One step solves, over couplings M >= 0 and masses rho,

    min 1/2 <C, M> + eps <M, log M> + h (<f, rho> + T <rho, log rho>)
    s.t. M 1 = a,  M^T 1 = rho,  sum(rho) = 1,

with C the squared geodesic distances between the previous and the new
locations.  Stationarity gives M = diag(u) K diag(v) with K = exp(-C / 2 eps)
and the scaling fixed point

    u <- a / (K v)
    v <- [xi * (K^T u)^(-hT/eps)]^(eps/(eps+hT)),   xi = exp(-h f / eps),

with v normalised so that rho = v * (K^T u) sums to one.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .activation import check_interior
from .diffusion import (
    WeightedCloud,
    em_step,
    free_energy,
    knn_volumes,
    step_generator,
)
from .errors import NumericError
from .geometry import arc_coordinate, ensure_fast_distance_validated

log = logging.getLogger(__name__)

MASS_FLOOR = 1e-300
# masses below exp(this) are handled by the log-domain sweep
_DIRECT_LOG_MIN = -650.0


@dataclass
class ProxParams:
    eps: float = 0.1
    h: float = 1e-4
    T: float = 0.0
    max_fixed_point_iters: int = 5000
    fp_tol: float = 1e-9
    volume_correction: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.max_fixed_point_iters < 1:
            raise ValueError("max_fixed_point_iters must be positive")


@dataclass
class CostMatrix:
    C: np.ndarray
    eps: float

    @property
    def log_K(self):
        return -self.C / (2.0 * self.eps)

    @property
    def K(self):
        return np.exp(self.log_K)

    def scaled_kernel(self):
        """K = diag(exp(r)) Kh diag(exp(c)) with every row and column of Kh peaking at 1.

        Entries of Kh that underflow are negligible next to the unit entry of
        their row and column, so scaling sweeps on Kh stay finite.
        """
        Kh = self.C * (-0.5 / self.eps)
        r = Kh.max(axis=1)
        Kh -= r[:, None]
        c = Kh.max(axis=0)
        Kh -= c[None, :]
        np.exp(Kh, out=Kh)
        return Kh, r, c


def cost_matrix(act, prev, new, eps=0.1):
    """Squared geodesic distances between two clouds of equal size.

    Uses the separable arc-length coordinates, so C_ij = |phi(x_i) - phi(y_j)|^2
    costs O(n N^2).
    """
    prev = check_interior(act.check_dim(np.atleast_2d(prev), "prev"), "prev")
    new = check_interior(act.check_dim(np.atleast_2d(new), "new"), "new")
    if prev.shape != new.shape:
        raise ValueError("clouds must have equal particle counts")
    ensure_fast_distance_validated(act)
    a, b = arc_coordinate(act, prev), arc_coordinate(act, new)
    C = np.zeros((a.shape[0], b.shape[0]))
    for i in range(a.shape[1]):
        d = a[:, i, None] - b[None, :, i]
        C += d * d
    return CostMatrix(C, eps)


@dataclass
class JKOResult:
    masses: np.ndarray
    iterations: int
    residual: float
    log_u: np.ndarray
    log_v: np.ndarray
    log_domain: bool = False

    def coupling(self, cost):
        return np.exp(self.log_u[:, None] + cost.log_K + self.log_v[None, :])


def _fixed_point_direct(Kh, a, log_xi, p, s, max_iters, tol, log_v0=None):
    """Sweeps on the shifted kernel; returns log u, log v relative to Kh."""
    N = a.size
    log_u = np.zeros(N)
    log_v = np.zeros(N) if log_v0 is None else log_v0 - np.max(log_v0)
    v = np.exp(log_v)
    residual = np.inf
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for it in range(1, max_iters + 1):
            u = a / (Kh @ v)
            Ktu = Kh.T @ u
            lv = p * (log_xi - s * np.log(Ktu))
            lv -= np.max(lv)
            v = np.exp(lv)
            scale = np.dot(v, Ktu)
            v /= scale
            lv -= np.log(scale)
            lu = np.log(u)
            if not (np.all(np.isfinite(lu)) and np.all(np.isfinite(lv))):
                return None
            residual = max(np.max(np.abs(lu - log_u)), np.max(np.abs(lv - log_v)))
            log_u, log_v = lu, lv
            if residual < tol:
                return log_u, log_v, it, residual, True, v * (Kh.T @ u)
    return log_u, log_v, max_iters, residual, False, None


def _fixed_point_log(log_K, log_a, log_xi, p, s, max_iters, tol):
    N = log_a.size
    log_u = np.zeros(N)
    log_v = np.zeros(N)
    residual = np.inf
    for it in range(1, max_iters + 1):
        lu = log_a - logsumexp(log_K + log_v[None, :], axis=1)
        log_Ktu = logsumexp(log_K + lu[:, None], axis=0)
        lv = p * (log_xi - s * log_Ktu)
        lv -= logsumexp(lv + log_Ktu)
        residual = max(np.max(np.abs(lu - log_u)), np.max(np.abs(lv - log_v)))
        log_u, log_v = lu, lv
        if residual < tol:
            return log_u, log_v, it, residual, True
    return log_u, log_v, max_iters, residual, False


def jko_step(params, masses_prev, cost, f_new, warm_start=None):
    """One entropic proximal step; returns a :class:`JKOResult`.

    Residual is the max-norm change of (log u, log v) between sweeps.  Sweeps
    run on the row/column-shifted kernel, with a log-domain sweep as
    fallback.  ``warm_start`` is an initial log v (e.g. from the previous
    step with the same particle labels); the fixed point does not depend on
    it.
    """
    a = np.asarray(masses_prev, dtype=float)
    f = np.asarray(f_new, dtype=float)
    N = a.size
    if cost.C.shape != (N, N) or f.shape != (N,):
        raise ValueError("masses, cost and f must have matching sizes")
    if abs(a.sum() - 1.0) > 1e-10 or np.any(a < 0):
        raise ValueError("masses_prev must be a probability vector")
    a = np.maximum(a, MASS_FLOOR)
    a = a / a.sum()
    eps, h, T = cost.eps, params.h, params.T
    if abs(cost.eps - params.eps) > 0:
        raise ValueError("cost matrix was built with a different eps")
    if N == 1:
        # the marginal constraint fixes M = [[1]]
        return JKOResult(np.ones(1), 0, 0.0, -cost.log_K[0], np.zeros(1))

    s = h * T / eps
    p = eps / (eps + h * T)
    log_xi = -h * (f - f.min()) / eps
    out = None
    if np.log(a.min()) > _DIRECT_LOG_MIN:
        Kh, r, c = cost.scaled_kernel()
        # in shifted variables xi picks up exp(c) since 1 - p s = p
        v0 = None
        if warm_start is not None and np.all(np.isfinite(warm_start)):
            v0 = np.asarray(warm_start, dtype=float) + c
        out = _fixed_point_direct(Kh, a, log_xi + c, p, s, params.max_fixed_point_iters, params.fp_tol, v0)
        del Kh
    if out is not None:
        log_u, log_v, iters, residual, ok, rho = out
        # undo the shifts: u = uh exp(-r), v = vh exp(-c)
        log_u, log_v = log_u - r, log_v - c
        log_domain = False
    else:
        log_domain = True
        log_K = cost.log_K
        log_u, log_v, iters, residual, ok = _fixed_point_log(
            log_K, np.log(a), log_xi, p, s, params.max_fixed_point_iters, params.fp_tol
        )
        rho = np.exp(log_v + logsumexp(log_K + log_u[:, None], axis=0)) if ok else None
    if not ok:
        raise NumericError(
            "JKO scaling iteration did not converge",
            iterations=iters,
            residual=float(residual),
        )
    rho = rho / rho.sum()
    return JKOResult(rho, iters, float(residual), log_u, log_v, log_domain)


def jko_objective(params, masses_prev, cost, f_new, M):
    """Value of the discrete entropic proximal objective at coupling ``M``."""
    rho = M.sum(axis=0)
    pos = M > 0
    ent_M = np.sum(M[pos] * np.log(M[pos]))
    rp = rho > 0
    ent_rho = np.sum(rho[rp] * np.log(rho[rp]))
    return 0.5 * np.sum(cost.C * M) + cost.eps * ent_M + params.h * (f_new @ rho + params.T * ent_rho)


def jko_kkt_residual(params, masses_prev, cost, f_new, result):
    """Max-norm KKT residual of the coupling and masses returned by jko_step.

    Stationarity in M and rho requires
    Q_ij = C_ij/2 + eps log M_ij + h f_j + h T log rho_j to be constant in j
    for every row i; the residual combines that spread with the row and
    column marginal errors.
    """
    a = np.asarray(masses_prev, dtype=float)
    log_M = result.log_u[:, None] + cost.log_K + result.log_v[None, :]
    M = np.exp(log_M)
    rho = M.sum(axis=0)
    Q = 0.5 * cost.C + cost.eps * log_M + params.h * (np.asarray(f_new)[None, :] + params.T * np.log(rho)[None, :])
    spread = 0.5 * np.max(Q.max(axis=1) - Q.min(axis=1))
    return float(max(spread, np.max(np.abs(M.sum(axis=1) - a)), np.max(np.abs(rho - result.masses))))


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------
@dataclass
class DiffuseResult:
    snapshots: list = field(default_factory=list)
    free_energy: list = field(default_factory=list)
    fp_iters: list = field(default_factory=list)
    fp_residual: list = field(default_factory=list)
    step_ms: list = field(default_factory=list)
    final: WeightedCloud = None

    runtime_header = ("k", "fp_iters", "fp_residual", "free_energy", "step_ms")

    def runtime_rows(self):
        return [
            (k, self.fp_iters[k], self.fp_residual[k], self.free_energy[k], self.step_ms[k])
            for k in range(len(self.free_energy))
        ]

    def snapshot_header(self, dim):
        return ("k", "particle_id") + tuple(f"x_{i + 1}" for i in range(dim)) + ("mass",)

    def snapshot_rows(self):
        rows = []
        for cloud in self.snapshots:
            for i in range(cloud.N):
                rows.append((cloud.k, i, *cloud.locations[i], cloud.masses[i]))
        return rows


def uniform_start(dparams):
    """Initial cloud: N uniform draws on the cube (stream index 0), equal masses."""
    rng = step_generator(dparams.seed, 0)
    x = rng.uniform(0.0, 1.0, (dparams.N, dparams.act.dim))
    x = np.clip(x, 1e-6, 1.0 - 1e-6)
    return WeightedCloud.uniform(x)


def diffuse_run(dparams, pparams, steps, initial=None, snapshot_every=None, record_timing=True, knn_k=8):
    """Particle locations by Euler-Maruyama, masses by the entropic JKO step.

    With ``pparams.volume_correction`` the potential passed to the proximal
    step is f - T log V_i, V_i the kNN volume of particle i, so the discrete
    entropy sum m log m is measured against the sample volumes and the
    recursion targets the Gibbs density rather than its square.
    """
    if abs(pparams.T - dparams.T) > 0 or abs(pparams.h - dparams.h) > 0:
        raise ValueError("DiffusionParams and ProxParams disagree on T or h")
    act, obj, T = dparams.act, dparams.obj, dparams.T
    cloud = uniform_start(dparams) if initial is None else initial
    if cloud.locations.shape[1] != act.dim:
        raise ValueError("initial cloud has the wrong dimension")
    result = DiffuseResult()
    snapshot_every = snapshot_every or 0

    def record(c, iters, res, ms):
        result.free_energy.append(free_energy(c, obj, T, knn_k))
        result.fp_iters.append(int(iters))
        result.fp_residual.append(float(res))
        result.step_ms.append(float(ms))
        if snapshot_every and (c.k % snapshot_every == 0 or c.k == steps):
            result.snapshots.append(c)

    record(cloud, 0, 0.0, 0.0)
    warm = None
    for k in range(1, steps + 1):
        t0 = time.perf_counter()
        new_x = em_step(act, obj, T, dparams.h, cloud.locations, step_generator(dparams.seed, k))
        cost = cost_matrix(act, cloud.locations, new_x, pparams.eps)
        potential = np.asarray(obj.value(new_x), dtype=float)
        if pparams.volume_correction and T > 0:
            potential = potential - T * np.log(knn_volumes(new_x, knn_k))
        jko = jko_step(pparams, cloud.masses, cost, potential, warm)
        warm = jko.log_v
        cloud = WeightedCloud(new_x, jko.masses, k)
        ms = 1e3 * (time.perf_counter() - t0) if record_timing else 0.0
        record(cloud, jko.iterations, jko.residual, ms)
    result.final = cloud
    return result
