"""Benchmark objectives on the unit cube.

Objectives work on arrays whose last axis holds the coordinates, so they can
be evaluated on a single point or on a whole particle cloud.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


class Objective:
    name = "objective"

    def __init__(self, dim):
        self.dim = int(dim)

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        """Hessian at a single point; central differences of ``grad`` by default."""
        x = np.asarray(x, dtype=float)
        n = x.size
        H = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1e-6
            H[:, i] = (self.grad(x + e) - self.grad(x - e)) / 2e-6
        return 0.5 * (H + H.T)

    def __call__(self, x):
        return self.value(x)


class Himmelblau(Objective):
    """Himmelblau's function rescaled from [-5, 5]^2 onto [0, 1]^2."""

    name = "himmelblau"

    def __init__(self):
        super().__init__(2)

    @staticmethod
    def _parts(x):
        x = np.asarray(x, dtype=float)
        u = 10.0 * x[..., 0] - 5.0
        v = 10.0 * x[..., 1] - 5.0
        A = u * u + 10.0 * x[..., 1] - 16.0
        B = 10.0 * x[..., 0] - 12.0 + v * v
        return u, v, A, B

    def value(self, x):
        _, _, A, B = self._parts(x)
        return A * A + B * B

    def grad(self, x):
        u, v, A, B = self._parts(x)
        g1 = 2.0 * A * 20.0 * u + 2.0 * B * 10.0
        g2 = 2.0 * A * 10.0 + 2.0 * B * 20.0 * v
        return np.stack([g1, g2], axis=-1)

    def hess(self, x):
        u, v, A, B = self._parts(x)
        dA = np.array([20.0 * u, 10.0])
        dB = np.array([10.0, 20.0 * v])
        H = 2.0 * (np.outer(dA, dA) + np.outer(dB, dB))
        H[0, 0] += 2.0 * A * 200.0
        H[1, 1] += 2.0 * B * 200.0
        return H


def himmelblau(x1, x2):
    return Himmelblau().value(np.stack([np.asarray(x1, float), np.asarray(x2, float)], -1))


@lru_cache(maxsize=1)
def himmelblau_minima(grid=1000):
    """The four local minimisers of the rescaled Himmelblau function in [0, 1]^2.

    Found by a brute-force grid scan for local minima followed by Newton
    polishing.  Returned in a fixed order (by descending x1, then x2).
    """
    obj = Himmelblau()
    g = (np.arange(grid) + 0.5) / grid
    X, Y = np.meshgrid(g, g, indexing="ij")
    F = obj.value(np.stack([X, Y], -1))
    inner = F[1:-1, 1:-1]
    is_min = np.ones_like(inner, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= inner < F[1 + di : grid - 1 + di, 1 + dj : grid - 1 + dj]
    idx = np.argwhere(is_min) + 1
    found = []
    for i, j in idx:
        x = np.array([g[i], g[j]])
        for _ in range(50):
            step = np.linalg.solve(obj.hess(x), obj.grad(x))
            x = x - step
            if np.max(np.abs(step)) < 1e-15:
                break
        if not any(np.allclose(x, y, atol=1e-8) for y in found):
            found.append(x)
    found.sort(key=lambda p: (-p[0], -p[1]))
    return np.array(found)


class Quadratic(Objective):
    """scale / 2 * |x - center|^2"""

    name = "quadratic"

    def __init__(self, center, scale=1.0):
        c = np.atleast_1d(np.asarray(center, dtype=float))
        super().__init__(c.size)
        self.center = c
        self.scale = float(scale)

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return 0.5 * self.scale * np.sum(d * d, axis=-1)

    def grad(self, x):
        return self.scale * (np.asarray(x, dtype=float) - self.center)

    def hess(self, x):
        return self.scale * np.eye(self.dim)


class Linear(Objective):
    """p^T x"""

    name = "linear"

    def __init__(self, p):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        super().__init__(p.size)
        self.p = p

    def value(self, x):
        return np.asarray(x, dtype=float) @ self.p

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.p, x.shape).copy()

    def hess(self, x):
        return np.zeros((self.dim, self.dim))


class Constant(Objective):
    name = "constant"

    def __init__(self, dim, level=0.0):
        super().__init__(dim)
        self.level = float(level)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.level)

    def grad(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def hess(self, x):
        return np.zeros((self.dim, self.dim))


def make_objective(name, dim=None, **params):
    if name == "himmelblau":
        return Himmelblau()
    if name == "quadratic":
        center = params.get("center", 0.5 if dim is None else [0.5] * dim)
        if dim is not None and np.ndim(center) == 0:
            center = [center] * dim
        return Quadratic(center, params.get("scale", 1.0))
    if name == "linear":
        p = params.get("p", 1.0)
        if dim is not None and np.ndim(p) == 0:
            p = [p] * dim
        return Linear(p)
    if name == "constant":
        return Constant(dim or 1, params.get("level", 0.0))
    raise ValueError(f"unknown objective {name!r}")
