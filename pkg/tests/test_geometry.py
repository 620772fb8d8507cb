import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfield_flows.activation import CallableActivation, Logistic, SoftProjection
from hopfield_flows.errors import DomainError
from hopfield_flows.geometry import (
    adaptive_simpson,
    arc_coordinate,
    arc_coordinate_inverse,
    christoffel,
    christoffel_tensor,
    fast_distance,
    geodesic_distance,
    geodesic_residual,
    geodesic_solve,
    pairwise_sq_distance,
    validate_fast_distance,
)


def arctan_activation():
    # sigma(u) = 1/2 + arctan(u)/pi is not in the x(1-x) family
    return CallableActivation(
        value=lambda u: 0.5 + np.arctan(u) / np.pi,
        derivative=lambda u: 1.0 / (np.pi * (1.0 + u * u)),
        inverse=lambda x: np.tan(np.pi * (np.asarray(x) - 0.5)),
        dim=1,
        second_derivative=lambda u: -2.0 * u / (np.pi * (1.0 + u * u) ** 2),
    )


def test_simpson_polynomial_and_smooth():
    assert adaptive_simpson(lambda t: t**3, 0.0, 2.0) == pytest.approx(4.0, abs=1e-12)
    assert adaptive_simpson(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-10)


def test_christoffel_examples():
    act = SoftProjection([0.3, 2.0])
    assert np.allclose(christoffel(act, [0.5, 0.5]), 0.0, atol=1e-15)
    assert christoffel(SoftProjection(1.0, 1), [0.25])[0] == pytest.approx(-4.0 / 3.0, rel=1e-12)


def test_christoffel_against_finite_difference():
    act = SoftProjection(0.7, 1)
    for x in np.linspace(0.05, 0.95, 19):
        d = 1e-6
        lg = lambda s: math.log(math.sqrt(1.0 / act.metric_inv(np.array([s]))[0]))
        fd = (lg(x + d) - lg(x - d)) / (2 * d)
        assert christoffel(act, [x])[0] == pytest.approx(fd, abs=1e-7)


def test_mixed_christoffel_symbols_are_zero():
    act = SoftProjection([0.5, 1.0, 2.0])
    G = christoffel_tensor(act, [0.2, 0.6, 0.9])
    for i in range(3):
        for j in range(3):
            for k in range(3):
                if not (i == j == k):
                    assert G[k, i, j] == 0.0


def test_geodesic_closed_form_midpoint():
    act = SoftProjection(0.25, 1)
    c = geodesic_solve(act, [0.25], [0.75])
    assert c(0.5)[0] == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(c.points[0], [0.25]) and np.allclose(c.points[-1], [0.75])


def test_constant_geodesic():
    act = SoftProjection(1.0, 2)
    c = geodesic_solve(act, [0.3, 0.6], [0.3, 0.6])
    assert np.allclose(c.points, [0.3, 0.6], atol=1e-15)
    assert geodesic_distance(act, [0.3, 0.6], [0.3, 0.6]) == 0.0


@pytest.mark.parametrize("method", ["closed", "shooting"])
def test_geodesic_residual(method):
    act = SoftProjection([0.25, 1.0])
    c = geodesic_solve(act, [0.1, 0.8], [0.7, 0.3], method=method)
    t = np.linspace(0.1, 0.9, 9)
    assert np.max(np.abs(geodesic_residual(act, c, t))) < 1e-8
    assert np.all((c.points >= 0) & (c.points <= 1))
    assert np.max(np.abs(c.points[0] - c.x)) < 1e-10 and np.max(np.abs(c.points[-1] - c.y)) < 1e-10


def test_shooting_matches_closed_form():
    act = SoftProjection([0.5, 1.5])
    x, y = np.array([0.2, 0.9]), np.array([0.6, 0.15])
    closed = geodesic_solve(act, x, y, samples=21, method="closed")
    shot = geodesic_solve(act, x, y, samples=21, method="shooting")
    assert np.max(np.abs(closed.points - shot.points)) < 1e-8


def test_distance_oracle_value():
    act = SoftProjection(0.25, 1)
    expected = math.sqrt(8.0) * math.pi / 6.0
    assert geodesic_distance(act, [0.25], [0.75]) == pytest.approx(expected, rel=1e-9)
    assert float(fast_distance(act, [0.25], [0.75])) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.4810, abs=1e-4)


def test_non_closed_form_activation():
    # Phi(x) = log(tan(pi x / 2)) / sqrt(pi) for the arctan activation
    act = arctan_activation()
    phi = lambda s: math.log(math.tan(math.pi * s / 2)) / math.sqrt(math.pi)
    x, y = 0.2, 0.85
    d = geodesic_distance(act, [x], [y])
    assert d == pytest.approx(abs(phi(y) - phi(x)), rel=1e-8)
    assert float(fast_distance(act, [x], [y])) == pytest.approx(d, rel=1e-8)
    c = geodesic_solve(act, [x], [y], method="shooting")
    assert np.max(np.abs(geodesic_residual(act, c, np.linspace(0.1, 0.9, 9)))) < 1e-8


def test_symmetry_on_random_pairs():
    act = SoftProjection([0.3, 1.2])
    rng = np.random.default_rng(4)
    for _ in range(100):
        x, y = rng.uniform(0.01, 0.99, (2, 2))
        a = geodesic_distance(act, x, y) if _ < 10 else float(fast_distance(act, x, y))
        b = geodesic_distance(act, y, x) if _ < 10 else float(fast_distance(act, y, x))
        assert a == pytest.approx(b, rel=1e-10)


def test_triangle_inequality():
    act = SoftProjection([0.25, 4.0, 1.0])
    X = np.random.default_rng(5).uniform(0.001, 0.999, (200, 3, 3))
    dxz = fast_distance(act, X[:, 0], X[:, 2])
    dxy = fast_distance(act, X[:, 0], X[:, 1])
    dyz = fast_distance(act, X[:, 1], X[:, 2])
    assert np.all(dxz <= dxy + dyz + 1e-9)


def test_separability():
    act = SoftProjection([0.25, 2.0])
    x, y = np.array([0.1, 0.7]), np.array([0.6, 0.2])
    per = [
        geodesic_distance(SoftProjection(b, 1), [x[i]], [y[i]]) for i, b in enumerate((0.25, 2.0))
    ]
    assert geodesic_distance(act, x, y) ** 2 == pytest.approx(per[0] ** 2 + per[1] ** 2, abs=1e-9)


def test_pairwise_matches_fast_distance():
    act = Logistic([1.0, 3.0])
    rng = np.random.default_rng(6)
    X, Y = rng.uniform(0.05, 0.95, (7, 2)), rng.uniform(0.05, 0.95, (5, 2))
    D = pairwise_sq_distance(act, X, Y)
    for i in range(7):
        for j in range(5):
            assert D[i, j] == pytest.approx(float(fast_distance(act, X[i], Y[j])) ** 2, rel=1e-12)


@given(st.floats(0.001, 0.999))
@settings(max_examples=50, deadline=None)
def test_arc_coordinate_round_trip(x):
    act = SoftProjection(0.25, 1)
    w = arc_coordinate(act, np.array([x]))
    assert arc_coordinate_inverse(act, w)[0] == pytest.approx(x, abs=1e-12)


def test_fast_path_validation():
    assert validate_fast_distance(SoftProjection([0.25, 1.0]), pairs=4) < 1e-6


def test_boundary_rejected():
    act = SoftProjection(1.0, 1)
    with pytest.raises(DomainError):
        christoffel(act, [0.0])
    with pytest.raises(DomainError):
        geodesic_solve(act, [0.5], [1.0])
