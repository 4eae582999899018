import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robinheat.grid import Boundary, DomainSpec
from robinheat.potentials import (AffineWeight1D, Indicator, LogWeight2D, Scaled, SingularPotentialError, Sum,
                                  Tabulated, canonical_parameters, canonical_weight, critical_potential,
                                  eval_potential, eval_weight, hardy_weight, u_infty_2d, u_sigma_1d, u_sigma_2d)

E = math.e


@pytest.mark.parametrize("args,expected", [((0.0, 1.0, 1.0), (1.0, 1.0)),
                                           ((1.0, 1.0, 1.0), (0.5, 0.5)),
                                           ((0.75, 2.0, 0.5), (0.75, 0.75))])
def test_canonical_parameters(args, expected):
    assert canonical_parameters(*args) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("lam", [-0.1, 1.2])
def test_canonical_parameters_reject_lambda(lam):
    with pytest.raises(ValueError):
        canonical_parameters(lam, 1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_canonical_parameters_range(lam, rho, sigma0):
    alpha, beta = canonical_parameters(lam, rho, sigma0)
    assert 0.5 <= alpha <= 1.0
    assert beta > 0
    assert math.isclose(beta, alpha / (rho * sigma0), rel_tol=1e-12)


def test_reference_potential_values():
    assert eval_potential(u_sigma_2d(1.0, 1.0), 1.0) == pytest.approx(0.25, rel=1e-15)
    assert eval_potential(u_infty_2d(1.0), E) == pytest.approx(1 / (4 * E * E), rel=1e-14)
    assert 1 / (4 * E * E) == pytest.approx(0.033834, abs=1e-6)
    assert eval_potential(u_sigma_1d(2.0), 0.0) == pytest.approx(1.0, rel=1e-15)


def test_u_infty_singular_at_obstacle():
    with pytest.raises(SingularPotentialError):
        eval_potential(u_infty_2d(1.0), 1.0)
    assert u_infty_2d(1.0, cap=1e6)(np.array([1.0, E]), clamp=True)[0] == 1e6


def test_potential_rejects_points_inside_obstacle():
    with pytest.raises(ValueError):
        u_sigma_2d(2.0, 1.0)(1.0)


def test_weight_values():
    assert eval_weight(LogWeight2D(1.0, 1.0, 1.0), E) == pytest.approx(2.0, rel=1e-15)
    assert eval_weight(AffineWeight1D.canonical(0.5, 1.0), 0.0) == pytest.approx(0.70711, abs=1e-5)
    assert eval_weight(LogWeight2D(0.5, 0.5, 1.0), 1.0) == pytest.approx(math.sqrt(0.5), rel=1e-15)


def test_hardy_weight_values():
    assert hardy_weight(1.0, 1.0)(1.0) == pytest.approx(1.0, rel=1e-15)
    assert hardy_weight(1.0, math.inf)(E) == pytest.approx(1 / (4 * E * E), rel=1e-14)
    assert hardy_weight(1.0, 0.5)(1.0) == pytest.approx(0.25, rel=1e-15)
    with pytest.raises(ValueError):
        hardy_weight(1.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1e-2, 1e2), st.floats(1.0, 1e6))
def test_u_sigma_below_hardy_weight(rho, sigma0, scale):
    r = rho * scale
    assert u_sigma_2d(rho, sigma0)(r) <= hardy_weight(rho, sigma0)(r)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 1.0), st.floats(1e-3, 1e2), st.floats(0.1, 10.0))
def test_weights_nondecreasing(alpha, beta, rho):
    r = rho * np.geomspace(1.0, 1e8, 200)
    assert np.all(np.diff(LogWeight2D(alpha, beta, rho)(r)) >= 0)
    x = np.linspace(0.0, 1e4, 200)
    assert np.all(np.diff(AffineWeight1D(alpha, beta)(x)) >= 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 1.0), st.floats(1e-2, 10.0), st.floats(1.0, 1e4))
def test_weight_derivatives(alpha, beta, r):
    for w in (LogWeight2D(alpha, beta, 1.0), AffineWeight1D(alpha, beta)):
        h = 1e-6 * r
        fd = (w(r + h) - w(r - h)) / (2 * h) if r - h > 0 else None
        if fd is not None:
            assert float(w.derivative(r)) == pytest.approx(float(fd), rel=1e-6)


def test_u_sigma_converges_to_u_infty():
    r = np.geomspace(1.001, 1e4, 50)
    target = u_infty_2d(1.0)(r)
    errs = [np.max(np.abs(u_sigma_2d(1.0, s)(r) - target) / target) for s in (1.0, 10.0, 100.0, 1e3, 1e6)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-2


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1e-2, 1e2))
def test_u_sigma_positive_decreasing(rho, sigma0):
    r = rho * np.geomspace(1.0, 1e6, 300)
    u = u_sigma_2d(rho, sigma0)(r)
    assert np.all(u > 0) and np.all(np.diff(u) < 0)


def test_tabulated_interpolates_linearly(tmp_path):
    r = np.array([1.0, 2.0, 4.0])
    tab = Tabulated(r, np.array([0.0, 2.0, 6.0]))
    assert tab(1.5) == pytest.approx(1.0)
    assert tab(3.0) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        tab(5.0)
    path = tmp_path / "v.csv"
    path.write_text("# r,value\n4,6\n1,0\n2,2\n")
    back = Tabulated.from_csv(path)
    np.testing.assert_array_equal(back.r, r)
    assert back(3.0) == pytest.approx(4.0)


def test_combinators():
    ind = Indicator(5.0, 2.0, 3.0)
    r = np.array([1.5, 2.0, 2.5, 3.0, 3.5])
    np.testing.assert_array_equal(ind(r), [0, 5, 5, 5, 0])
    np.testing.assert_array_equal(ind.scaled(2.0)(r), [0, 10, 10, 10, 0])
    np.testing.assert_allclose(Scaled(ind, 0.5)(r), [0, 2.5, 2.5, 2.5, 0])
    np.testing.assert_allclose(Sum((ind, Scaled(ind, 1.0)))(r), [0, 10, 10, 10, 0])


def test_canonical_weight_and_critical_potential():
    ball = DomainSpec.ball_exterior(2, 1.0, Boundary.robin(2.0))
    w = canonical_weight(ball, 0.75)
    assert (w.alpha, w.beta) == pytest.approx(canonical_parameters(0.75, 1.0, 2.0))
    assert critical_potential(ball, 0.75).shift == pytest.approx(w.beta)
    # at lambda = 0 the critical shift is the U_sigma shift
    assert critical_potential(ball, 0.0).shift == pytest.approx(u_sigma_2d(1.0, 2.0).shift)
    line = DomainSpec.half_line(Boundary.robin(2.0))
    w1 = canonical_weight(line, 1.0)
    assert (w1.alpha, w1.shift) == pytest.approx((0.5, 0.25))
    with pytest.raises(ValueError):
        canonical_weight(DomainSpec.ball_exterior(2, 1.0, Boundary.dirichlet()), 0.0)
