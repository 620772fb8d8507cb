"""Mirror maps, Bregman divergences and mirror descent.

For the soft-projection activation with steepness beta, the conjugate pair is

    psi*(x) = sum_i (x_i log x_i + (1 - x_i) log(1 - x_i)) / (2 beta_i)
    psi(z)  = sum_i log(1 + exp(2 beta_i z_i)) / (2 beta_i)

so that grad psi(z) = expit(2 beta z) maps dual coordinates to the primal
cube, grad psi* = logit(x) / (2 beta) maps back, and the Hessian of psi* is
the activation metric diag(1 / (2 beta x (1 - x))).
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, logit, xlogy

from .activation import check_interior, clamp_interior
from .errors import DomainError, NumericError


class MirrorMapPair:
    """A strictly convex mirror map ``psi`` on the dual space and its conjugate."""

    name = "abstract"

    def psi(self, z):
        raise NotImplementedError

    def grad_psi(self, z):
        raise NotImplementedError

    def hess_psi_diag(self, z):
        raise NotImplementedError

    def psi_star(self, x):
        raise NotImplementedError

    def grad_psi_star(self, x):
        raise NotImplementedError

    def check_primal(self, x):
        return np.asarray(x, dtype=float)

    def clamp_primal(self, x):
        return x

    # dual <-> primal coordinates
    def to_primal(self, z):
        return self.grad_psi(z)

    def to_dual(self, x):
        return self.grad_psi_star(self.check_primal(x))


class EuclideanPair(MirrorMapPair):
    """psi(z) = |z|^2 / 2; mirror descent is plain gradient descent."""

    name = "euclidean"

    def psi(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * np.sum(z * z, axis=-1)

    def grad_psi(self, z):
        return np.array(z, dtype=float)

    def hess_psi_diag(self, z):
        return np.ones_like(np.asarray(z, dtype=float))

    psi_star = psi
    grad_psi_star = grad_psi


class BitEntropyPair(MirrorMapPair):
    """Weighted bit entropy on (0, 1)^n and its dual log-partition map.

    ``kappa`` and ``c`` enter psi* as ``kappa * prod(x) + c``.  Only the
    ``kappa = 0`` member has the closed-form conjugate psi used here, so psi,
    grad psi and the dual Bregman divergence require ``kappa = 0``.
    """

    name = "bit_entropy"

    def __init__(self, beta, dim=None, kappa=0.0, c=0.0):
        b = np.asarray(beta, dtype=float)
        if b.ndim == 0:
            if dim is None:
                raise ValueError("dim is required when beta is a scalar")
            b = np.full(int(dim), float(b))
        if np.any(b <= 0):
            raise ValueError("beta entries must be positive")
        self.beta = b
        self.dim = b.size
        self.kappa = float(kappa)
        self.c = float(c)

    def _require_separable(self):
        if self.kappa != 0.0:
            raise NotImplementedError("psi has no closed form for kappa != 0")

    def psi(self, z):
        self._require_separable()
        z = np.asarray(z, dtype=float)
        s = 2.0 * self.beta
        return np.sum(np.logaddexp(0.0, s * z) / s, axis=-1)

    def grad_psi(self, z):
        self._require_separable()
        return expit(2.0 * self.beta * np.asarray(z, dtype=float))

    def hess_psi_diag(self, z):
        x = self.grad_psi(z)
        return 2.0 * self.beta * x * (1.0 - x)

    def check_primal(self, x):
        return check_interior(x)

    def clamp_primal(self, x):
        return clamp_interior(x)

    def psi_star(self, x):
        x = self.check_primal(x)
        ent = (xlogy(x, x) + xlogy(1.0 - x, 1.0 - x)) / (2.0 * self.beta)
        return np.sum(ent, axis=-1) + self.kappa * np.prod(x, axis=-1) + self.c

    def grad_psi_star(self, x):
        x = self.check_primal(x)
        out = logit(x) / (2.0 * self.beta)
        if self.kappa != 0.0:
            # d/dx_i prod_j x_j = prod_{j != i} x_j
            n = x.shape[-1]
            others = np.stack(
                [np.prod(np.delete(x, i, axis=-1), axis=-1) for i in range(n)], axis=-1
            )
            out = out + self.kappa * others
        return out

    def hess_psi_star_diag(self, x):
        x = self.check_primal(x)
        return 1.0 / (2.0 * self.beta * x * (1.0 - x))


def bregman(pair, which, a, b):
    """D_F(a, b) = F(a) - F(b) - <a - b, grad F(b)> for F = psi or psi*."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("arguments must have equal shapes")
    if which == "psi":
        F, dF = pair.psi, pair.grad_psi
    elif which == "psi_star":
        a, b = pair.check_primal(a), pair.check_primal(b)
        F, dF = pair.psi_star, pair.grad_psi_star
    else:
        raise ValueError("which must be 'psi' or 'psi_star'")
    val = F(a) - F(b) - np.sum((a - b) * dF(b), axis=-1)
    # round-off can leave a tiny negative value when a ~ b
    return np.maximum(val, 0.0)


def to_dual(pair, x):
    return pair.to_dual(x)


def to_primal(pair, z):
    return pair.to_primal(z)


def mirror_step(pair, grad_f, z, h):
    """One mirror-descent step in dual coordinates on Z = R^n.

    ``grad_f`` is the gradient of the objective in primal coordinates
    x = grad psi(z); the dual-space gradient follows by the chain rule,
    grad_z f = hess psi(z) grad_x f.  With Z = R^n the Bregman projection is
    the identity.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    z = np.asarray(z, dtype=float)
    x = pair.to_primal(z)
    g = np.asarray(grad_f(x), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient in mirror step", x=x.tolist())
    grad_z = pair.hess_psi_diag(z) * g
    # grad psi(y') = grad psi(z) - h grad_z f
    x_next = pair.clamp_primal(x - h * grad_z)
    try:
        return pair.to_dual(x_next)
    except DomainError as exc:  # pragma: no cover - clamp keeps x_next interior
        raise NumericError("mirror step left the primal domain") from exc
