"""Economic load dispatch solved by the dual Hopfield method.

The mixed-integer problem

    minimise   p^T y + c1/2 |x - x0|^2 + c2/2 |y - y0|^2
    subject to x^T y = pi_d,  1^T y = pi_d,  x in {0,1}^n, y in [0,1]^n

is relaxed to z = (x; y) in (0,1)^{2n}.  Each outer iteration minimises the
augmented Lagrangian over z with natural-gradient (Hopfield) sub-iterations
under the soft-projection metric, then takes a dual ascent step on the two
multipliers.

Monte Carlo restarts share the problem data and differ only in the initial
multipliers; they are advanced together as rows of one array, each row with
its own stopping logic.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .activation import SoftProjection
from .flows import natural_gradient_step
from .geometry import fast_distance
from .objectives import Objective


@dataclass
class DispatchProblem:
    p: np.ndarray
    c1: float
    c2: float
    x0: np.ndarray
    y0: np.ndarray
    pi_d: float
    r: float = 1.0
    h_hopfield: float = 1e-2
    h_dual: float = 1e-1
    tol: float = 1e-7
    max_subiters: int = 10_000
    residual_tol: float = 1e-3
    max_outer: int = 500
    beta: float = 1.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        self.y0 = np.asarray(self.y0, dtype=float)
        n = self.p.size
        if self.x0.shape != (n,) or self.y0.shape != (n,):
            raise ValueError("p, x0 and y0 must have the same length")
        if not np.all((self.x0 == 0) | (self.x0 == 1)):
            raise ValueError("x0 must be binary")
        if np.any(self.y0 < 0) or np.any(self.y0 > 1) or np.any(self.y0[self.x0 == 0] != 0):
            raise ValueError("y0 must lie in [0,1] and vanish where x0 = 0")
        for name in ("c1", "c2", "pi_d", "r", "h_hopfield", "h_dual", "tol", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_subiters < 1 or self.max_outer < 1:
            raise ValueError("iteration caps must be positive")

    @property
    def n_G(self):
        return self.p.size


def generate_problem(seed, n_G=40, **overrides):
    """Random instance following the case-study recipe, from one generator."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.0, 1.0, n_G)
    # uniform on (0, 1]
    c1, c2 = 1.0 - rng.uniform(0.0, 1.0, 2)
    x0 = np.round(rng.uniform(0.0, 1.0, n_G))
    y0 = rng.uniform(0.0, 1.0, n_G) * x0
    u = rng.uniform(0.0, 1.0)
    pi_d = (1.0 + 0.1 * (u - 0.5)) * y0.sum()
    return DispatchProblem(p=p, c1=float(c1), c2=float(c2), x0=x0, y0=y0, pi_d=float(pi_d), **overrides)


def split(prob, z):
    z = np.asarray(z, dtype=float)
    return z[..., : prob.n_G], z[..., prob.n_G :]


def dispatch_cost(prob, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != prob.n_G or y.shape[-1] != prob.n_G:
        raise ValueError("x and y must have n_G entries")
    dx, dy = x - prob.x0, y - prob.y0
    return (
        y @ prob.p
        + 0.5 * prob.c1 * np.sum(dx * dx, axis=-1)
        + 0.5 * prob.c2 * np.sum(dy * dy, axis=-1)
    )


def residuals(prob, z):
    x, y = split(prob, z)
    return np.sum(x * y, axis=-1) - prob.pi_d, np.sum(y, axis=-1) - prob.pi_d


@dataclass
class DispatchState:
    z: np.ndarray
    lambda1: float
    lambda2: float

    def residuals(self, prob):
        return residuals(prob, self.z)


def aug_lagrangian(prob, state_or_z, lam=None):
    """Value and z-gradient of the augmented Lagrangian.

    Accepts a :class:`DispatchState`, or ``z`` with multipliers ``lam`` of
    shape ``(..., 2)`` broadcasting against the leading axes of ``z``.
    """
    if isinstance(state_or_z, DispatchState):
        z = state_or_z.z
        lam = np.array([state_or_z.lambda1, state_or_z.lambda2])
    else:
        z = state_or_z
    lam = np.asarray(lam, dtype=float)
    x, y = split(prob, z)
    r1, r2 = residuals(prob, z)
    l1, l2 = lam[..., 0], lam[..., 1]
    value = (
        dispatch_cost(prob, x, y)
        + l1 * r1
        + l2 * r2
        + 0.5 * prob.r * (r1 * r1 + r2 * r2)
    )
    a1 = (l1 + prob.r * r1)[..., None]
    a2 = (l2 + prob.r * r2)[..., None]
    gx = prob.c1 * (x - prob.x0) + a1 * y
    gy = prob.p + prob.c2 * (y - prob.y0) + a1 * x + a2
    return value, np.concatenate([gx, gy], axis=-1)


class AugmentedLagrangianObjective(Objective):
    """L_r(., lambda) as an objective on z, for fixed multipliers."""

    name = "dispatch_augmented_lagrangian"

    def __init__(self, prob, lam):
        super().__init__(2 * prob.n_G)
        self.prob = prob
        self.lam = np.asarray(lam, dtype=float)

    def value(self, z):
        return aug_lagrangian(self.prob, z, self.lam)[0]

    def grad(self, z):
        return aug_lagrangian(self.prob, z, self.lam)[1]


def hopfield_minimize(prob, z, lam, record_values=False):
    """Hopfield sub-iterations on rows of ``z`` for fixed multipliers ``lam``.

    Each row stops once its max-norm change per step drops below ``prob.tol``
    or after ``prob.max_subiters`` steps.  Returns the final rows, the number
    of steps per row, and (optionally) the per-step Lagrangian values of the
    first row.
    """
    act = SoftProjection(prob.beta, 2 * prob.n_G)
    z = np.array(z, dtype=float, ndmin=2)
    lam = np.array(lam, dtype=float, ndmin=2)
    iters = np.zeros(z.shape[0], dtype=int)
    running = np.arange(z.shape[0])
    values = [float(aug_lagrangian(prob, z[0], lam[0])[0])] if record_values else None
    for _ in range(prob.max_subiters):
        if running.size == 0:
            break
        obj = AugmentedLagrangianObjective(prob, lam[running])
        old = z[running]
        new = natural_gradient_step(act, obj, old, prob.h_hopfield)
        z[running] = new
        iters[running] += 1
        if record_values and running[0] == 0:
            values.append(float(aug_lagrangian(prob, z[0], lam[0])[0]))
        change = np.max(np.abs(new - old), axis=-1)
        running = running[change >= prob.tol]
    return z, iters, values


@dataclass
class DispatchResult:
    lambda_init: np.ndarray
    z_star: np.ndarray
    lambda_star: np.ndarray
    converged: bool
    iterates: list = field(default_factory=list)
    r1: list = field(default_factory=list)
    r2: list = field(default_factory=list)
    L_value: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    dG: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    wall_s: float = 0.0

    header = ("outer_iter", "dG", "l2", "r1", "r2", "L_value")

    def rows(self):
        return [
            (k, self.dG[k], self.l2[k], self.r1[k], self.r2[k], self.L_value[k])
            for k in range(len(self.iterates))
        ]

    @property
    def outer_iters(self):
        return len(self.iterates)

    def monotone_fraction(self):
        """Fraction of outer steps along which d_G(z_k, z*) does not increase."""
        d = np.asarray(self.dG)
        if d.size < 2:
            return 1.0
        return float(np.mean(np.diff(d) <= 1e-12))

    def binary_fraction(self, prob, tol=0.05):
        x = self.z_star[: prob.n_G]
        return float(np.mean(np.abs(x - np.round(x)) < tol))

    def cost(self, prob):
        x, y = split(prob, self.z_star)
        return float(dispatch_cost(prob, x, y))


def _solve_rows(prob, lam0, z0, record_timing=True):
    t_start = time.perf_counter()
    lam = np.array(lam0, dtype=float, ndmin=2)
    R = lam.shape[0]
    z = np.array(np.broadcast_to(z0, (R, 2 * prob.n_G)), dtype=float)
    results = [
        DispatchResult(lambda_init=lam[i].copy(), z_star=None, lambda_star=None, converged=False)
        for i in range(R)
    ]
    active = np.arange(R)
    best = [None] * R
    for _ in range(prob.max_outer):
        if active.size == 0:
            break
        z_rows, iters, _ = hopfield_minimize(prob, z[active], lam[active])
        z[active] = z_rows
        r1, r2 = residuals(prob, z_rows)
        L = aug_lagrangian(prob, z_rows, lam[active])[0]
        for j, i in enumerate(active):
            res = results[i]
            res.iterates.append(z_rows[j].copy())
            res.r1.append(float(r1[j]))
            res.r2.append(float(r2[j]))
            res.L_value.append(float(L[j]))
            res.inner_iters.append(int(iters[j]))
            worst = max(abs(r1[j]), abs(r2[j]))
            if best[i] is None or worst < best[i][0]:
                best[i] = (worst, z_rows[j].copy(), lam[i].copy())
        done = (np.abs(r1) < prob.residual_tol) & (np.abs(r2) < prob.residual_tol)
        for i in active[done]:
            results[i].converged = True
        # dual ascent for the rows that continue
        keep = ~done
        lam[active[keep], 0] += prob.h_dual * r1[keep]
        lam[active[keep], 1] += prob.h_dual * r2[keep]
        active = active[keep]

    act = SoftProjection(prob.beta, 2 * prob.n_G)
    elapsed = time.perf_counter() - t_start if record_timing else 0.0
    for i, res in enumerate(results):
        if res.converged:
            res.z_star = res.iterates[-1].copy()
            res.lambda_star = lam[i].copy()
        else:
            res.z_star, res.lambda_star = best[i][1], best[i][2]
        X = np.asarray(res.iterates)
        res.dG = [float(d) for d in fast_distance(act, X, res.z_star)]
        res.l2 = [float(d) for d in np.linalg.norm(X - res.z_star, axis=-1)]
        res.wall_s = elapsed
    return results


def default_start(prob):
    return np.full(2 * prob.n_G, 0.5)


def draw_initial_multipliers(rng_seed, count=1):
    """Initial (lambda1, lambda2) pairs, uniform on [-1, 1]^2."""
    return np.random.default_rng(rng_seed).uniform(-1.0, 1.0, (count, 2))


def dual_hopfield_solve(prob, lambda_init=None, rng_seed=0, z_init=None, record_timing=True):
    """Single dual Hopfield run; ``lambda_init`` defaults to a seeded draw."""
    if lambda_init is None:
        lambda_init = draw_initial_multipliers(rng_seed)[0]
    z0 = default_start(prob) if z_init is None else z_init
    return _solve_rows(prob, np.asarray(lambda_init, dtype=float)[None, :], z0, record_timing)[0]


def monte_carlo(prob, restarts=100, seed=0, z_init=None, record_timing=True):
    """Independent restarts differing only in their initial multipliers."""
    lam0 = draw_initial_multipliers([seed, 1], restarts)
    z0 = default_start(prob) if z_init is None else z_init
    return _solve_rows(prob, lam0, z0, record_timing)
