"""Deterministic Hopfield dynamics as natural gradient descent.

The HNN ODE ``x_H' = -grad f(x), x = sigma(x_H)`` is, in the visible state,
``x' = -G(x)^{-1} grad f(x)`` with the diagonal metric of
:mod:`hopfield_flows.activation`.  This module integrates that flow, takes
its explicit (Amari) and proximal time steps, and records traces.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .activation import CLAMP, check_interior, clamp_interior
from .errors import NumericError
from .geometry import arc_coordinate, arc_coordinate_inverse, fast_distance

MAX_CONSECUTIVE_CLAMPS = 10


@dataclass
class FlowTrace:
    """Iterates of a descent run plus per-step diagnostics."""

    iterates: list = field(default_factory=list)
    f: list = field(default_factory=list)
    step_ms: list = field(default_factory=list)
    dG_to_ref: list = field(default_factory=list)
    l2_to_ref: list = field(default_factory=list)

    def append(self, x, fx, ms):
        self.iterates.append(np.array(x, dtype=float))
        self.f.append(float(fx))
        self.step_ms.append(float(ms))

    def __len__(self):
        return len(self.iterates)

    @property
    def final(self):
        return self.iterates[-1]

    def set_reference(self, act, ref):
        """Fill the distance columns against ``ref`` (e.g. the converged point)."""
        X = np.asarray(self.iterates)
        ref = np.asarray(ref, dtype=float)
        self.dG_to_ref = [float(d) for d in fast_distance(act, X, ref)]
        self.l2_to_ref = [float(d) for d in np.linalg.norm(X - ref, axis=-1)]
        return self

    def rows(self):
        n = len(self)
        dG = self.dG_to_ref or [float("nan")] * n
        l2 = self.l2_to_ref or [float("nan")] * n
        return [(k, self.f[k], dG[k], l2[k], self.step_ms[k]) for k in range(n)]

    header = ("iter", "f", "dG_to_ref", "l2_to_ref", "step_ms")


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled
        self._t = time.perf_counter()

    def lap(self):
        if not self.enabled:
            return 0.0
        now = time.perf_counter()
        ms, self._t = 1e3 * (now - self._t), now
        return ms


def _checked_grad(obj, x):
    g = np.asarray(obj.grad(x), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient", x=np.asarray(x).tolist())
    return g


def natural_gradient_step(act, obj, x, h):
    """x - h G(x)^{-1} grad f(x), clamped into [CLAMP, 1 - CLAMP]^n.

    Works on a single point or a stack of points (last axis = coordinates).
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = check_interior(act.check_dim(x, "x"))
    return clamp_interior(x - h * act.metric_inv(x) * _checked_grad(obj, x))


def natural_gradient_descent(act, obj, x0, h, steps, record_timing=True):
    x = check_interior(act.check_dim(x0, "x0")).astype(float)
    trace = FlowTrace()
    clock = _Clock(record_timing)
    trace.append(x, obj.value(x), 0.0)
    for _ in range(steps):
        x = natural_gradient_step(act, obj, x, h)
        trace.append(x, obj.value(x), clock.lap())
    return trace


def mirror_descent(pair, obj, x0, h, steps, record_timing=True):
    """Run mirror steps in dual coordinates and record the primal iterates."""
    from .mirror import mirror_step

    z = pair.to_dual(x0)
    trace = FlowTrace()
    clock = _Clock(record_timing)
    x = pair.to_primal(z)
    trace.append(x, obj.value(x), 0.0)
    for _ in range(steps):
        z = mirror_step(pair, obj.grad, z, h)
        x = pair.to_primal(z)
        trace.append(x, obj.value(x), clock.lap())
    return trace


def hnn_ode_integrate(act, obj, x0, h, steps, form="primal", record_timing=True):
    """Fixed-step RK4 integration of the HNN flow.

    ``form="primal"`` integrates x' = -G(x)^{-1} grad f(x) directly;
    ``form="hidden"`` integrates x_H' = -grad f(sigma(x_H)) and reports
    x = sigma(x_H).  Both give the same trajectory up to discretisation error.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = check_interior(act.check_dim(x0, "x0")).astype(float)
    trace = FlowTrace()
    clock = _Clock(record_timing)
    trace.append(x, obj.value(x), 0.0)

    if form == "hidden":
        u = act.inverse(x)

        def field(s):
            return -_checked_grad(obj, act.value(s))

        for _ in range(steps):
            k1 = field(u)
            k2 = field(u + 0.5 * h * k1)
            k3 = field(u + 0.5 * h * k2)
            k4 = field(u + h * k3)
            u = u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            x = clamp_interior(act.value(u))
            trace.append(x, obj.value(x), clock.lap())
        return trace
    if form != "primal":
        raise ValueError("form must be 'primal' or 'hidden'")

    def field(s):
        s = clamp_interior(s)
        return -act.metric_inv(s) * _checked_grad(obj, s)

    clamps = 0
    for k in range(steps):
        k1 = field(x)
        k2 = field(x + 0.5 * h * k1)
        k3 = field(x + 0.5 * h * k2)
        k4 = field(x + h * k3)
        x_new = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.any(x_new < CLAMP) or np.any(x_new > 1.0 - CLAMP):
            clamps += 1
            if clamps >= MAX_CONSECUTIVE_CLAMPS:
                raise NumericError(
                    "RK4 iterate left the cube on consecutive steps",
                    step=k,
                    consecutive=clamps,
                )
            x_new = clamp_interior(x_new)
        else:
            clamps = 0
        x = x_new
        trace.append(x, obj.value(x), clock.lap())
    return trace


# ---------------------------------------------------------------------------
# proximal step
# ---------------------------------------------------------------------------
PROX_MAX_ITERS = 500
PROX_GRAD_TOL = 1e-12
PROX_PERTURBATION = 0.05


def _prox_pieces(act, obj, w0, y, h):
    w = arc_coordinate(act, y)
    g_inv = act.metric_inv(y)
    sqrt_g = 1.0 / np.sqrt(g_inv)
    r = w - w0
    value = 0.5 * float(r @ r) + h * float(obj.value(y))
    grad = r * sqrt_g + h * _checked_grad(obj, y)
    return value, grad, r, g_inv, sqrt_g


def prox_objective(act, obj, x, y, h):
    """1/2 d_G(x, y)^2 + h f(y)."""
    r = arc_coordinate(act, y) - arc_coordinate(act, x)
    return 0.5 * float(r @ r) + h * float(obj.value(y))


def prox_residual(act, obj, x, y, h):
    """Max-norm of the gradient of the prox objective at ``y``."""
    w0 = arc_coordinate(act, x)
    return float(np.max(np.abs(_prox_pieces(act, obj, w0, y, h)[1])))


def _newton_prox(act, obj, w0, y, h):
    value, grad, r, g_inv, sqrt_g = _prox_pieces(act, obj, w0, y, h)
    for it in range(PROX_MAX_ITERS):
        if np.max(np.abs(grad)) < PROX_GRAD_TOL:
            return y, value, it
        # d/dy sqrt(g) = -1/2 (g^ii)^{-3/2} (g^ii)'
        dsqrt_g = -0.5 * g_inv**-1.5 * act.metric_inv_grad(y)
        H = np.diag(sqrt_g**2 + r * dsqrt_g) + h * obj.hess(y)
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = None
        if step is None or not np.all(np.isfinite(step)) or step @ grad >= 0:
            # fall back to the metric-preconditioned gradient
            step = -g_inv * grad
        # stay inside the cube
        t = 1.0
        for i in np.flatnonzero(step):
            bound = (CLAMP - y[i]) / step[i] if step[i] < 0 else (1 - CLAMP - y[i]) / step[i]
            t = min(t, 0.99 * bound)
        accepted = False
        for _ in range(60):
            y_try = y + t * step
            v_try, g_try, r_try, gi_try, sg_try = _prox_pieces(act, obj, w0, y_try, h)
            if v_try <= value + 1e-4 * t * (step @ grad) or t < 1e-14:
                accepted = True
                break
            t *= 0.5
        if not accepted or np.max(np.abs(y_try - y)) == 0.0:
            # no further progress is possible in floating point
            return y, value, it
        y, value, grad, r, g_inv, sqrt_g = y_try, v_try, g_try, r_try, gi_try, sg_try
    raise NumericError(
        "prox Newton iteration did not converge",
        iterations=PROX_MAX_ITERS,
        residual=float(np.max(np.abs(grad))),
    )


def finite_prox_step(act, obj, x, h, n_starts=5):
    """argmin_y 1/2 d_G(x, y)^2 + h f(y) over the open cube.

    Damped Newton on the first-order conditions, run from ``x`` and from
    perturbed starts along fixed sign patterns in arc-length coordinates; the
    start with the lowest prox objective wins.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = check_interior(act.check_dim(x, "x")).astype(float)
    if x.ndim != 1:
        raise ValueError("finite_prox_step takes a single point")
    w0 = arc_coordinate(act, x)
    n = x.size
    alt = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    patterns = [np.ones(n), -np.ones(n), alt, -alt][: max(0, n_starts - 1)]
    starts = [x]
    for d in patterns:
        y0 = arc_coordinate_inverse(act, w0 + PROX_PERTURBATION * d / np.sqrt(n))
        starts.append(clamp_interior(y0))
    best, best_val, errors = None, np.inf, []
    for y0 in starts:
        try:
            y, val, _ = _newton_prox(act, obj, w0, y0, h)
        except NumericError as exc:
            errors.append(exc)
            continue
        if val < best_val:
            best, best_val = y, val
    if best is None:
        raise errors[0]
    return best


def prox_descent(act, obj, x0, h, steps, record_timing=True):
    x = check_interior(act.check_dim(x0, "x0")).astype(float)
    trace = FlowTrace()
    clock = _Clock(record_timing)
    trace.append(x, obj.value(x), 0.0)
    for _ in range(steps):
        x = finite_prox_step(act, obj, x, h)
        trace.append(x, obj.value(x), clock.lap())
    return trace
