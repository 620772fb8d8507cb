"""Geodesics and geodesic distance for the activation-induced metric.

Because the metric is diagonal and ``g_ii`` depends on ``x_i`` alone, the
only non-zero Christoffel symbols are ``Gamma^i_ii`` and the geodesic
equations decouple into n scalar two-point boundary value problems.

Two routes to the distance are provided:

* :func:`geodesic_distance` integrates the arc-length integrand along the
  solved geodesic with adaptive Simpson quadrature.  This is the reference
  value.
* :func:`fast_distance` / :func:`pairwise_sq_distance` use the per-coordinate
  arc-length coordinate ``Phi_i(x_i) = int_{1/2}^{x_i} sqrt(g_ii)``, in which
  the metric is Euclidean, so ``d_G(x, y) = ||Phi(x) - Phi(y)||_2``.  For the
  ``x(1-x)`` family ``Phi`` is closed form.  The fast route is checked against
  the quadrature route by :func:`validate_fast_distance`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .activation import BOUNDARY_TOL, check_interior
from .errors import DomainError, NumericError

log = logging.getLogger(__name__)

QUAD_TOL = 1e-10
SHOOT_TOL = 1e-10
SHOOT_MAX_BISECT = 200
RK4_STEPS = 512


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------
def adaptive_simpson(func, a, b, tol=QUAD_TOL, max_depth=50, min_depth=3):
    """Adaptive Simpson quadrature of a scalar function on [a, b]."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = func(lm), func(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth >= max_depth or (depth >= min_depth and abs(delta) <= 15.0 * tol):
            return left + right + delta / 15.0
        return recurse(a, m, fa, flm, fm, left, tol / 2, depth + 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2, depth + 1
        )

    if a == b:
        return 0.0
    fa, fb, fm = func(a), func(b), func(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 0)


# ---------------------------------------------------------------------------
# Christoffel symbols
# ---------------------------------------------------------------------------
def christoffel(act, x):
    """Gamma^i_ii = d/dx_i log sqrt(g_ii), for each coordinate i.

    Mixed symbols vanish identically for this metric and are not built here;
    see :func:`christoffel_tensor` for the full array.
    """
    x = act.check_dim(x, "x")
    check_interior(x)
    return -0.5 * act.metric_inv_grad(x) / act.metric_inv(x)


def christoffel_tensor(act, x):
    """Full array ``Gamma[k, i, j]`` from the general second-kind formula.

    Only meant for a single point; used to confirm that everything apart from
    the ``Gamma^i_ii`` diagonal is zero.
    """
    x = act.check_dim(x, "x")
    check_interior(x)
    if x.ndim != 1:
        raise ValueError("christoffel_tensor takes a single point")
    n = act.dim
    g_inv = act.metric_inv(x)
    g = 1.0 / g_inv
    # dg/dx_i of g_ii = -(g^ii)' / (g^ii)^2
    dg_diag = -act.metric_inv_grad(x) / g_inv**2
    # dG[i, j, l] = d g_jl / d x_i
    dG = np.zeros((n, n, n))
    for i in range(n):
        dG[i, i, i] = dg_diag[i]
    G_inv = np.diag(1.0 / g)
    gamma = np.zeros((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for l in range(n):
                    acc += G_inv[k, l] * (dG[i, j, l] + dG[j, i, l] - dG[l, i, j])
                gamma[k, i, j] = 0.5 * acc
    return gamma


def _gamma_unchecked(act, x):
    return -0.5 * act.metric_inv_grad(x) / act.metric_inv(x)


# ---------------------------------------------------------------------------
# arc-length coordinates
# ---------------------------------------------------------------------------
def _closed_scale(act):
    return getattr(act, "bit_scale", None)


def arc_coordinate(act, x):
    """Phi_i(x_i) = int_{1/2}^{x_i} sqrt(g_ii(s)) ds, elementwise."""
    x = act.check_dim(x, "x")
    check_interior(x)
    c = _closed_scale(act)
    if c is not None:
        return (2.0 / np.sqrt(c)) * (np.arcsin(np.sqrt(x)) - np.pi / 4.0)
    out = np.empty_like(x)
    flat_x = x.reshape(-1, act.dim)
    flat_out = out.reshape(-1, act.dim)
    probe = np.full(act.dim, 0.5)
    for i in range(act.dim):

        def integrand(s, i=i):
            probe[i] = s
            return np.sqrt(1.0 / act.metric_inv(probe)[i])

        for r in range(flat_x.shape[0]):
            flat_out[r, i] = adaptive_simpson(integrand, 0.5, flat_x[r, i])
        probe[i] = 0.5
    return out


def arc_coordinate_inverse(act, w, tol=1e-13):
    """Inverse of :func:`arc_coordinate` (bisection for general activations)."""
    w = act.check_dim(w, "w")
    c = _closed_scale(act)
    if c is not None:
        theta = np.clip(np.sqrt(c) * w / 2.0 + np.pi / 4.0, 0.0, np.pi / 2.0)
        return np.sin(theta) ** 2
    flat_w = w.reshape(-1, act.dim)
    out = np.empty_like(flat_w)
    for r in range(flat_w.shape[0]):
        lo = np.full(act.dim, 2 * BOUNDARY_TOL)
        hi = np.full(act.dim, 1 - 2 * BOUNDARY_TOL)
        for _ in range(200):
            if np.max(hi - lo) < tol:
                break
            mid = 0.5 * (lo + hi)
            below = arc_coordinate(act, mid) < flat_w[r]
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out[r] = 0.5 * (lo + hi)
    return out.reshape(w.shape)


def fast_distance(act, x, y):
    """d_G via arc-length coordinates; broadcasts over leading axes."""
    return np.linalg.norm(arc_coordinate(act, x) - arc_coordinate(act, y), axis=-1)


def pairwise_sq_distance(act, X, Y, phi_x=None, phi_y=None):
    """Matrix of squared geodesic distances between rows of X and rows of Y.

    Costs O(n N) arc-coordinate evaluations plus O(n N M) arithmetic.
    Precomputed arc coordinates may be passed in to skip recomputation.
    """
    px = arc_coordinate(act, X) if phi_x is None else phi_x
    py = arc_coordinate(act, Y) if phi_y is None else phi_y
    out = np.zeros((px.shape[0], py.shape[0]))
    for i in range(act.dim):
        diff = px[:, i, None] - py[None, :, i]
        out += diff * diff
    return out


# ---------------------------------------------------------------------------
# geodesic curves
# ---------------------------------------------------------------------------
@dataclass
class GeodesicCurve:
    """Geodesic from ``x`` (t=0) to ``y`` (t=1).

    ``method`` is ``"closed"`` for the x(1-x) family, where
    gamma_i(t) = sin^2((1-t) arcsin sqrt(x_i) + t arcsin sqrt(y_i)),
    or ``"shooting"``, where the curve is the RK4 solution of the decoupled
    initial value problems with the initial slopes found by bisection.
    """

    act: object
    x: np.ndarray
    y: np.ndarray
    method: str
    slopes: np.ndarray | None = None
    rk4_steps: int = RK4_STEPS
    t: np.ndarray = field(default_factory=lambda: np.empty(0))
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def _theta(self, t):
        a = np.arcsin(np.sqrt(self.x))
        b = np.arcsin(np.sqrt(self.y))
        t = np.asarray(t, dtype=float)[..., None]
        return (1.0 - t) * a + t * b, b - a

    def __call__(self, t):
        return self.evaluate(t)[0]

    def evaluate(self, t):
        """Return (gamma(t), gamma_dot(t)), each of shape t.shape + (n,)."""
        t = np.asarray(t, dtype=float)
        if self.method == "closed":
            theta, dtheta = self._theta(t)
            return np.sin(theta) ** 2, np.sin(2.0 * theta) * dtheta
        flat = t.reshape(-1)
        g, v, _ = _integrate(self.act, self.x, self.slopes, flat, self.rk4_steps)
        return g.reshape(t.shape + (self.act.dim,)), v.reshape(t.shape + (self.act.dim,))

    def velocity(self, t):
        return self.evaluate(t)[1]

    def acceleration(self, t):
        t = np.asarray(t, dtype=float)
        if self.method == "closed":
            theta, dtheta = self._theta(t)
            return 2.0 * np.cos(2.0 * theta) * dtheta**2
        # five-point stencil on the integrated velocity
        d = 1e-3
        vs = [self.velocity(t + k * d) for k in (-2, -1, 1, 2)]
        return (vs[0] - 8.0 * vs[1] + 8.0 * vs[2] - vs[3]) / (12.0 * d)


def _integrate(act, x0, v0, t_end, steps):
    """RK4 for gamma'' = -Gamma(gamma) gamma'^2, vectorised over end times.

    Returns positions, velocities and an escape mask (left the open cube).
    """
    t_end = np.atleast_1d(np.asarray(t_end, dtype=float))
    g = np.broadcast_to(x0, (t_end.size, act.dim)).astype(float).copy()
    v = np.broadcast_to(v0, (t_end.size, act.dim)).astype(float).copy()
    h = (t_end / steps)[:, None]
    escaped = np.zeros(g.shape, dtype=bool)
    lo, hi = 2 * BOUNDARY_TOL, 1 - 2 * BOUNDARY_TOL

    def acc(gg, vv):
        return -_gamma_unchecked(act, np.clip(gg, lo, hi)) * vv * vv

    for _ in range(steps):
        k1g, k1v = v, acc(g, v)
        k2g, k2v = v + 0.5 * h * k1v, acc(g + 0.5 * h * k1g, v + 0.5 * h * k1v)
        k3g, k3v = v + 0.5 * h * k2v, acc(g + 0.5 * h * k2g, v + 0.5 * h * k2v)
        k4g, k4v = v + h * k3v, acc(g + h * k3g, v + h * k3v)
        g = g + h / 6.0 * (k1g + 2 * k2g + 2 * k3g + k4g)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        bad = ~np.isfinite(g) | ~np.isfinite(v) | (g <= lo) | (g >= hi)
        if bad.any():
            escaped |= bad
            g = np.where(escaped, np.clip(np.nan_to_num(g, nan=0.5), lo, hi), g)
            v = np.where(escaped, 0.0, v)
    return g, v, escaped


def _shoot_slopes(act, x, y, steps):
    """Bisection on the initial slopes so that gamma(1) = y, per coordinate."""
    n = act.dim
    direction = np.sign(y - x)
    fixed = np.abs(y - x) < 1e-15
    lo = np.zeros(n)
    hi = np.where(fixed, 0.0, y - x)

    def endpoint(s):
        g, _, esc = _integrate(act, x, s, 1.0, steps)
        return g[0], esc[0]

    # expand the upper bracket until it overshoots the target
    for _ in range(60):
        end, esc = endpoint(hi)
        short = ~fixed & ~esc & (direction * (end - y) < 0)
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)
    else:
        raise NumericError("could not bracket geodesic initial slope", x=x, y=y)

    s = np.where(fixed, 0.0, 0.5 * (lo + hi))
    miss = np.full(n, np.inf)
    for it in range(SHOOT_MAX_BISECT):
        end, esc = endpoint(s)
        miss = np.where(fixed, 0.0, np.where(esc, np.inf, np.abs(end - y)))
        if np.all(miss < SHOOT_TOL):
            return s, it
        over = esc | (direction * (end - y) > 0)
        hi = np.where(over & ~fixed, s, hi)
        lo = np.where(~over & ~fixed, s, lo)
        s = np.where(fixed, 0.0, 0.5 * (lo + hi))
    raise NumericError(
        "geodesic shooting did not converge",
        x=x.tolist(),
        y=y.tolist(),
        endpoint_miss=miss.tolist(),
        bisection_steps=SHOOT_MAX_BISECT,
    )


def geodesic_solve(act, x, y, samples=101, method="auto", rk4_steps=RK4_STEPS):
    """Solve for the geodesic joining interior points x and y."""
    x = check_interior(act.check_dim(x, "x")).astype(float)
    y = check_interior(act.check_dim(y, "y")).astype(float)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("geodesic_solve takes single points")
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if method == "auto":
        method = "closed" if _closed_scale(act) is not None else "shooting"
    if method == "closed":
        if _closed_scale(act) is None:
            raise ValueError("closed-form geodesics need an x(1-x) activation")
        curve = GeodesicCurve(act, x, y, "closed")
    elif method == "shooting":
        slopes, _ = _shoot_slopes(act, x, y, rk4_steps)
        curve = GeodesicCurve(act, x, y, "shooting", slopes=slopes, rk4_steps=rk4_steps)
    else:
        raise ValueError(f"unknown geodesic method {method!r}")
    curve.t = np.linspace(0.0, 1.0, samples)
    curve.points = curve(curve.t)
    curve.points[0], curve.points[-1] = x, y
    return curve


def geodesic_residual(act, curve, t):
    """gamma_ddot + Gamma(gamma) gamma_dot^2 at the parameters ``t``."""
    g, v = curve.evaluate(t)
    return curve.acceleration(t) + _gamma_unchecked(act, g) * v * v


def geodesic_distance(act, x, y, tol=QUAD_TOL, method="auto"):
    """Reference d_G: adaptive quadrature of the speed along the geodesic."""
    x = check_interior(act.check_dim(x, "x"))
    y = check_interior(act.check_dim(y, "y"))
    if np.array_equal(x, y):
        return 0.0
    curve = geodesic_solve(act, x, y, samples=2, method=method)

    def speed(t):
        g, v = curve.evaluate(np.array([t]))
        g = np.clip(g[0], 2 * BOUNDARY_TOL, 1 - 2 * BOUNDARY_TOL)
        return float(np.sqrt(np.sum(v[0] ** 2 / act.metric_inv(g))))

    return adaptive_simpson(speed, 0.0, 1.0, tol)


def validate_fast_distance(act, pairs=8, seed=0, rel_tol=1e-6):
    """Compare the fast path with quadrature on random pairs; log mismatches.

    Returns the worst relative discrepancy.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        x = rng.uniform(0.05, 0.95, act.dim)
        y = rng.uniform(0.05, 0.95, act.dim)
        ref = geodesic_distance(act, x, y)
        fast = float(fast_distance(act, x, y))
        worst = max(worst, abs(fast - ref) / max(ref, 1e-300))
    if worst > rel_tol:
        log.warning(
            "fast geodesic distance disagrees with quadrature for %r: "
            "relative mismatch %.3e; quadrature is authoritative",
            act,
            worst,
        )
    return worst


def ensure_fast_distance_validated(act):
    if not getattr(act, "_fast_distance_checked", False):
        validate_fast_distance(act, pairs=3)
        try:
            act._fast_distance_checked = True
        except AttributeError:  # pragma: no cover - slotted activations
            pass


__all__ = [
    "DomainError",
    "GeodesicCurve",
    "adaptive_simpson",
    "arc_coordinate",
    "arc_coordinate_inverse",
    "christoffel",
    "christoffel_tensor",
    "fast_distance",
    "geodesic_distance",
    "geodesic_residual",
    "geodesic_solve",
    "pairwise_sq_distance",
    "validate_fast_distance",
]
