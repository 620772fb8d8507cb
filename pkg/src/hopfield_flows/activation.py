"""Activation functions and the diagonal Riemannian metric they induce.

Every activation here is separable: component ``i`` of ``sigma(u)`` depends on
``u[i]`` only, is strictly increasing, and maps the real line onto (0, 1).
The induced metric on the open unit cube is diagonal with

    g_ii(x) = 1 / sigma_i'(sigma_i^{-1}(x_i)).

All array arguments are laid out with coordinates on the last axis, so a
single point has shape ``(n,)`` and a cloud of points has shape ``(N, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import expit, logit

from .errors import DomainError

# Points closer than this to a face of the cube are rejected by metric code.
BOUNDARY_TOL = 1e-12
# Dynamics clamp iterates into [CLAMP, 1 - CLAMP].
CLAMP = 1e-9


def check_interior(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name} contains non-finite entries")
    if np.any(x <= BOUNDARY_TOL) or np.any(x >= 1.0 - BOUNDARY_TOL):
        raise DomainError(f"{name} must lie strictly inside (0, 1)^n")
    return x


def clamp_interior(x):
    return np.clip(x, CLAMP, 1.0 - CLAMP)


class Activation:
    """Base class for separable activations.

    Subclasses implement ``value``, ``derivative``, ``second_derivative`` and
    ``inverse``.  The metric helpers below fall back on those, and closed-form
    families override them.
    """

    kind = "abstract"

    def __init__(self, dim):
        if int(dim) < 1:
            raise ValueError("dim must be a positive integer")
        self.dim = int(dim)

    # -- per-coordinate map --------------------------------------------------
    def value(self, u):
        raise NotImplementedError

    def derivative(self, u):
        raise NotImplementedError

    def second_derivative(self, u):
        raise NotImplementedError

    def inverse(self, x):
        raise NotImplementedError

    # -- induced metric --------------------------------------------------------
    def metric_inv(self, x):
        """Diagonal of G^{-1}, i.e. sigma'(sigma^{-1}(x))."""
        return self.derivative(self.inverse(x))

    def metric_inv_grad(self, x):
        """d/dx_i of the i-th diagonal entry of G^{-1}."""
        u = self.inverse(x)
        return self.second_derivative(u) / self.derivative(u)

    def check_dim(self, v, name="argument"):
        v = np.asarray(v, dtype=float)
        if v.ndim == 0 or v.shape[-1] != self.dim:
            raise ValueError(
                f"{name} has trailing dimension {v.shape[-1] if v.ndim else 0}, "
                f"expected {self.dim}"
            )
        return v

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def _as_beta(beta, dim):
    b = np.asarray(beta, dtype=float)
    if b.ndim == 0:
        if dim is None:
            raise ValueError("dim is required when beta is a scalar")
        b = np.full(int(dim), float(b))
    if b.ndim != 1 or (dim is not None and b.size != int(dim)):
        raise ValueError("beta must be a scalar or a vector of length dim")
    if not np.all(np.isfinite(b)) or np.any(b <= 0):
        raise ValueError("beta entries must be positive")
    return b


class SoftProjection(Activation):
    """sigma_i(u) = tanh(beta_i (u - 1/2)) / 2 + 1/2.

    Evaluated through the identity tanh(a)/2 + 1/2 = expit(2a), which keeps
    full relative precision near 0.  The induced metric is
    g_ii = 1 / (2 beta_i x_i (1 - x_i)).
    """

    kind = "soft_projection"

    def __init__(self, beta, dim=None):
        b = _as_beta(beta, dim)
        super().__init__(b.size)
        self.beta = b

    @property
    def bit_scale(self):
        # g^ii = bit_scale * x (1 - x)
        return 2.0 * self.beta

    def value(self, u):
        u = self.check_dim(u, "x_hidden")
        return expit(2.0 * self.beta * (u - 0.5))

    def derivative(self, u):
        s = self.value(u)
        return 2.0 * self.beta * s * (1.0 - s)

    def second_derivative(self, u):
        s = self.value(u)
        return (2.0 * self.beta) ** 2 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def inverse(self, x):
        x = self.check_dim(x, "x")
        check_interior(x)
        return 0.5 + logit(x) / (2.0 * self.beta)

    def metric_inv(self, x):
        x = self.check_dim(x, "x")
        return self.bit_scale * x * (1.0 - x)

    def metric_inv_grad(self, x):
        x = self.check_dim(x, "x")
        return self.bit_scale * (1.0 - 2.0 * x)

    def __repr__(self):
        return f"SoftProjection(beta={self.beta.tolist()})"


class Logistic(Activation):
    """sigma_i(u) = 1 / (1 + exp(-beta_i u)); g_ii = 1 / (beta_i x_i (1 - x_i))."""

    kind = "logistic"

    def __init__(self, beta, dim=None):
        b = _as_beta(beta, dim)
        super().__init__(b.size)
        self.beta = b

    @property
    def bit_scale(self):
        return self.beta

    def value(self, u):
        u = self.check_dim(u, "x_hidden")
        return expit(self.beta * u)

    def derivative(self, u):
        s = self.value(u)
        return self.beta * s * (1.0 - s)

    def second_derivative(self, u):
        s = self.value(u)
        return self.beta**2 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def inverse(self, x):
        x = self.check_dim(x, "x")
        check_interior(x)
        return logit(x) / self.beta

    def metric_inv(self, x):
        x = self.check_dim(x, "x")
        return self.bit_scale * x * (1.0 - x)

    def metric_inv_grad(self, x):
        x = self.check_dim(x, "x")
        return self.bit_scale * (1.0 - 2.0 * x)

    def __repr__(self):
        return f"Logistic(beta={self.beta.tolist()})"


class Tabulated(Activation):
    """Activation given by a monotone table (u_j, s_j), shared by all coordinates.

    Between knots the map is the monotone cubic (PCHIP) interpolant.  Outside
    the table it continues with exponential tails matched in value and slope,
    ``s_0 exp(k_0 (u - u_0))`` on the left and
    ``1 - (1 - s_L) exp(-k_L (u - u_L))`` on the right, so the result is a
    C^1 homeomorphism of the real line onto (0, 1).  The inverse on the
    interpolated part is computed by bisection.
    """

    kind = "custom_tabulated"
    inverse_tol = 1e-12

    def __init__(self, u_knots, s_knots, dim):
        super().__init__(dim)
        u = np.asarray(u_knots, dtype=float)
        s = np.asarray(s_knots, dtype=float)
        if u.ndim != 1 or u.shape != s.shape or u.size < 2:
            raise ValueError("knot arrays must be 1-D, equally long, with >= 2 entries")
        if np.any(np.diff(u) <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("knots must be strictly increasing")
        if s[0] <= 0.0 or s[-1] >= 1.0:
            raise ValueError("tabulated values must lie strictly inside (0, 1)")
        self.u_knots, self.s_knots = u, s
        self._interp = PchipInterpolator(u, s, extrapolate=False)
        self._d1 = self._interp.derivative(1)
        self._d2 = self._interp.derivative(2)
        d_left, d_right = float(self._d1(u[0])), float(self._d1(u[-1]))
        if d_left <= 0 or d_right <= 0:
            raise ValueError("table must have positive end slopes")
        self._k_left = d_left / s[0]
        self._k_right = d_right / (1.0 - s[-1])

    def _pieces(self, u):
        return u < self.u_knots[0], u > self.u_knots[-1]

    def value(self, u):
        u = self.check_dim(u, "x_hidden")
        left, right = self._pieces(u)
        mid = ~(left | right)
        out = np.empty_like(u)
        out[mid] = self._interp(u[mid])
        out[left] = self.s_knots[0] * np.exp(self._k_left * (u[left] - self.u_knots[0]))
        out[right] = 1.0 - (1.0 - self.s_knots[-1]) * np.exp(
            -self._k_right * (u[right] - self.u_knots[-1])
        )
        return out

    def derivative(self, u):
        u = self.check_dim(u, "x_hidden")
        left, right = self._pieces(u)
        mid = ~(left | right)
        out = np.empty_like(u)
        out[mid] = self._d1(u[mid])
        out[left] = self._k_left * self.s_knots[0] * np.exp(
            self._k_left * (u[left] - self.u_knots[0])
        )
        out[right] = self._k_right * (1.0 - self.s_knots[-1]) * np.exp(
            -self._k_right * (u[right] - self.u_knots[-1])
        )
        return out

    def second_derivative(self, u):
        u = self.check_dim(u, "x_hidden")
        left, right = self._pieces(u)
        mid = ~(left | right)
        out = np.empty_like(u)
        out[mid] = self._d2(u[mid])
        out[left] = self._k_left**2 * self.s_knots[0] * np.exp(
            self._k_left * (u[left] - self.u_knots[0])
        )
        out[right] = -self._k_right**2 * (1.0 - self.s_knots[-1]) * np.exp(
            -self._k_right * (u[right] - self.u_knots[-1])
        )
        return out

    def inverse(self, x):
        x = self.check_dim(x, "x")
        check_interior(x)
        u0, u1 = self.u_knots[0], self.u_knots[-1]
        s0, s1 = self.s_knots[0], self.s_knots[-1]
        out = np.empty_like(x)
        left, right = x < s0, x > s1
        mid = ~(left | right)
        out[left] = u0 + np.log(x[left] / s0) / self._k_left
        out[right] = u1 - np.log((1.0 - x[right]) / (1.0 - s1)) / self._k_right
        target = x[mid]
        lo = np.full(target.shape, u0)
        hi = np.full(target.shape, u1)
        for _ in range(200):
            if target.size == 0 or np.max(hi - lo) < self.inverse_tol:
                break
            m = 0.5 * (lo + hi)
            below = self._interp(m) < target
            lo = np.where(below, m, lo)
            hi = np.where(below, hi, m)
        out[mid] = 0.5 * (lo + hi)
        return out


class CallableActivation(Activation):
    """Activation assembled from user callables acting elementwise.

    ``second_derivative`` is optional; a central difference is used when it is
    missing.
    """

    kind = "custom"

    def __init__(self, value, derivative, inverse, dim, second_derivative=None):
        super().__init__(dim)
        self._value = value
        self._derivative = derivative
        self._inverse = inverse
        self._second = second_derivative

    def value(self, u):
        return np.asarray(self._value(self.check_dim(u, "x_hidden")), dtype=float)

    def derivative(self, u):
        return np.asarray(self._derivative(self.check_dim(u, "x_hidden")), dtype=float)

    def second_derivative(self, u):
        u = self.check_dim(u, "x_hidden")
        if self._second is not None:
            return np.asarray(self._second(u), dtype=float)
        step = 1e-5 * np.maximum(1.0, np.abs(u))
        return (self._derivative(u + step) - self._derivative(u - step)) / (2 * step)

    def inverse(self, x):
        x = self.check_dim(x, "x")
        return np.asarray(self._inverse(x), dtype=float)


def identity_activation(dim):
    """sigma(u) = u on (0, 1): yields the Euclidean metric G = I.

    Not a homeomorphism of the whole line, but handy for checking that the
    Riemannian machinery reduces to its Euclidean counterpart.
    """
    return CallableActivation(
        value=lambda u: u,
        derivative=lambda u: np.ones_like(u),
        inverse=lambda x: check_interior(x).copy(),
        second_derivative=lambda u: np.zeros_like(u),
        dim=dim,
    )


@dataclass(frozen=True)
class MetricDiagonal:
    g: np.ndarray
    g_inv: np.ndarray
    at: np.ndarray


def sigma_apply(act, x_hidden):
    return act.value(x_hidden)


def sigma_inverse(act, x):
    x = act.check_dim(x, "x")
    check_interior(x)
    return act.inverse(x)


def metric_at(act, x):
    x = act.check_dim(x, "x")
    check_interior(x)
    g_inv = act.metric_inv(x)
    return MetricDiagonal(g=1.0 / g_inv, g_inv=g_inv, at=x)


def make_activation(kind, dim, beta=1.0, table=None):
    """Registry used by configuration loading."""
    if kind == "soft_projection":
        return SoftProjection(beta, dim)
    if kind == "logistic":
        return Logistic(beta, dim)
    if kind in ("custom_tabulated", "tabulated"):
        if table is None:
            raise ValueError("tabulated activation needs a (u_knots, s_knots) table")
        u_knots, s_knots = table
        return Tabulated(u_knots, s_knots, dim)
    raise ValueError(f"unknown activation kind {kind!r}")
