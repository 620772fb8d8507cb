import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfield_flows.activation import SoftProjection, identity_activation
from hopfield_flows.errors import NumericError
from hopfield_flows.flows import (
    finite_prox_step,
    hnn_ode_integrate,
    natural_gradient_descent,
    natural_gradient_step,
    prox_descent,
    prox_residual,
)
from hopfield_flows.geometry import fast_distance
from hopfield_flows.objectives import Constant, Himmelblau, Linear, Quadratic, himmelblau_minima


def test_natural_step_forced_arithmetic():
    act = SoftProjection(0.25, 1)
    x1 = natural_gradient_step(act, Linear([1.0]), np.array([0.5]), 0.1)
    assert x1[0] == pytest.approx(0.4875, abs=1e-15)


def test_natural_step_stationary_and_euclidean():
    act = SoftProjection(1.0, 2)
    x = np.array([0.3, 0.6])
    assert np.array_equal(natural_gradient_step(act, Constant(2), x, 0.5), x)
    q = Quadratic([0.4, 0.5], 2.0)
    ident = identity_activation(2)
    assert np.allclose(natural_gradient_step(ident, q, x, 0.1), x - 0.1 * q.grad(x), atol=1e-15)


def test_non_finite_gradient():
    class Bad(Constant):
        def grad(self, x):
            return np.full_like(np.asarray(x, float), np.inf)

    with pytest.raises(NumericError):
        natural_gradient_step(SoftProjection(1.0, 2), Bad(2), np.array([0.5, 0.5]), 0.1)


def test_step_is_clamped():
    act = identity_activation(1)
    x = natural_gradient_step(act, Linear([100.0]), np.array([0.5]), 1.0)
    assert x[0] == pytest.approx(1e-9)


@pytest.mark.parametrize(
    "obj,h",
    [(Himmelblau(), 1e-3), (Quadratic([0.3, 0.8], 5.0), 1e-1), (Linear([1.0, 0.5]), 1e-1)],
    ids=["himmelblau", "quadratic", "linear"],
)
def test_descent_property(obj, h):
    act = SoftProjection(0.25, 2)
    rng = np.random.default_rng(0)
    for x0 in rng.uniform(0.05, 0.95, (5, 2)):
        tr = natural_gradient_descent(act, obj, x0, h, 300, record_timing=False)
        assert np.all(np.diff(tr.f) <= 1e-12)


def test_constant_flow():
    act = SoftProjection(1.0, 2)
    tr = hnn_ode_integrate(act, Constant(2), [0.3, 0.4], 1e-2, 20)
    assert np.all(np.asarray(tr.iterates) == [0.3, 0.4])


def test_rk4_monotone_on_himmelblau():
    act = SoftProjection(0.25, 2)
    tr = hnn_ode_integrate(act, Himmelblau(), [0.5, 0.5], 1e-3, 2000, record_timing=False)
    assert np.all(np.diff(tr.f) <= 0)


def test_hidden_and_primal_forms_agree():
    act = SoftProjection(0.25, 2)
    obj = Himmelblau()
    for x0 in np.random.default_rng(1).uniform(0.1, 0.9, (10, 2)):
        a = hnn_ode_integrate(act, obj, x0, 1e-4, 1000, "primal", record_timing=False)
        b = hnn_ode_integrate(act, obj, x0, 1e-4, 1000, "hidden", record_timing=False)
        assert np.max(np.abs(np.asarray(a.iterates) - np.asarray(b.iterates))) < 1e-6


def test_trace_lengths_and_reference():
    act = SoftProjection(0.25, 2)
    tr = natural_gradient_descent(act, Himmelblau(), [0.5, 0.5], 1e-3, 50)
    tr.set_reference(act, tr.final)
    assert len(tr.iterates) == len(tr.f) == len(tr.step_ms) == len(tr.dG_to_ref) == 51
    assert tr.dG_to_ref[-1] == 0.0
    assert len(tr.rows()[0]) == len(tr.header)


def test_prox_identity_metric_quadratic():
    act = identity_activation(2)
    c = np.array([0.3, 0.7])
    q = Quadratic(c, 1.0)
    x = np.array([0.6, 0.4])
    h = 0.3
    assert np.allclose(finite_prox_step(act, q, x, h), (x + h * c) / (1 + h), atol=1e-10)


def test_prox_fixed_point():
    act = SoftProjection(0.25, 2)
    m = himmelblau_minima()[1]
    assert np.allclose(finite_prox_step(act, Himmelblau(), m, 1e-2), m, atol=1e-12)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.sampled_from([1e-4, 1e-3, 1e-2]))
@settings(max_examples=25, deadline=None)
def test_prox_first_order_residual(a, b, h):
    act = SoftProjection(0.25, 2)
    x = np.array([a, b])
    y = finite_prox_step(act, Himmelblau(), x, h)
    assert prox_residual(act, Himmelblau(), x, y, h) < 1e-7


def test_prox_converges_to_natural_step_quadratically():
    act = SoftProjection(0.25, 2)
    obj = Himmelblau()
    x = np.array([0.37, 0.61])
    gaps = []
    for h in (4e-5, 2e-5, 1e-5):
        gaps.append(np.linalg.norm(finite_prox_step(act, obj, x, h) - natural_gradient_step(act, obj, x, h)))
    ratios = [gaps[0] / gaps[1], gaps[1] / gaps[2]]
    assert all(3.5 < r < 4.5 for r in ratios)


def test_prox_descent_converges():
    act = SoftProjection(0.25, 2)
    tr = prox_descent(act, Himmelblau(), [0.5, 0.5], 5e-3, 60)
    assert np.all(np.diff(tr.f) <= 1e-12)
    d = min(float(fast_distance(act, tr.final, m)) for m in himmelblau_minima())
    assert d < 0.05


def test_bad_step_size():
    with pytest.raises(ValueError):
        natural_gradient_step(SoftProjection(1.0, 1), Linear([1.0]), [0.5], 0.0)
    with pytest.raises(ValueError):
        hnn_ode_integrate(SoftProjection(1.0, 1), Linear([1.0]), [0.5], 1e-3, 5, form="bogus")
