"""Grid-function calculus: quadrature, differentiation, Sobolev norms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invspec import (GridFunction, SmoothnessError, antiderivative,
                     differentiate, integrate, sobolev_norm)

M = 2000


def _gf(fn, tag=0, m=M):
    return GridFunction.from_callable(fn, m, smoothness_tag=tag)


def test_integrate_sine():
    f = _gf(lambda x: np.sin(np.pi * x))
    assert abs(integrate(f) - 2.0 / np.pi) < 1e-6


def test_l2_norm_sine():
    f = _gf(lambda x: np.sin(np.pi * x))
    assert abs(sobolev_norm(f, 0) - math.sqrt(0.5)) < 1e-6


def test_negative_norm_of_constant():
    # antiderivative of 1 recentered is x - 1/2; its L2 norm is 12^(-1/2)
    one = _gf(lambda x: np.ones_like(x))
    assert abs(sobolev_norm(one, -1) - 0.28867513459481287) < 1e-6


def test_first_order_norm():
    f = _gf(lambda x: np.sin(2 * np.pi * x), tag=2)
    exact = math.sqrt(0.5 + 0.5 * (2 * np.pi) ** 2)
    assert abs(sobolev_norm(f, 1) - exact) < 1e-4 * exact


def test_derivative_of_antiderivative():
    f = _gf(lambda x: np.cos(2 * np.pi * x), tag=1)
    g = differentiate(antiderivative(f))
    assert np.max(np.abs(g.values - f.values)) < 2e-5


def test_antiderivative_mean_zero():
    f = _gf(lambda x: np.exp(x))
    g = antiderivative(f, mean_zero=True)
    assert abs(integrate(g)) < 1e-13
    assert g.smoothness_tag == f.smoothness_tag + 1


def test_differentiate_needs_smoothness():
    f = _gf(lambda x: np.abs(x - 0.5), tag=0)
    with pytest.raises(SmoothnessError):
        differentiate(f)
    with pytest.raises(SmoothnessError):
        sobolev_norm(f, 1)


def test_tag_arithmetic():
    a = _gf(lambda x: x, tag=3)
    b = _gf(lambda x: x * x, tag=1)
    assert (a + b).smoothness_tag == 1
    assert (a * b).smoothness_tag == 1
    assert (2.0 * a).smoothness_tag == 3
    assert differentiate(a).smoothness_tag == 2


def test_grid_mismatch_rejected():
    a = _gf(lambda x: x, m=100)
    b = _gf(lambda x: x, m=200)
    with pytest.raises(ValueError):
        a + b


def test_shape_validated():
    with pytest.raises(ValueError):
        GridFunction(100, np.zeros(100))  # needs 101 nodes
    with pytest.raises(ValueError):
        GridFunction(100, np.zeros(101), smoothness_tag=-2)


coeffs = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


@given(a=coeffs, b=coeffs, c=coeffs)
@settings(max_examples=50, deadline=None)
def test_integrate_linear(a, b, c):
    m = 64
    f = GridFunction.from_callable(lambda x: a * x * x + b * x, m)
    g = GridFunction.from_callable(lambda x: np.cos(x), m)
    lhs = integrate(c * f + g)
    rhs = c * integrate(f) + integrate(g)
    assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(rhs))


@given(a=coeffs)
@settings(max_examples=50, deadline=None)
def test_norm_homogeneous(a):
    m = 64
    f = GridFunction.from_callable(lambda x: np.sin(3 * x) + 0.5, m)
    assert sobolev_norm(a * f, 0) == pytest.approx(abs(a) * sobolev_norm(f, 0),
                                                   abs=1e-12)
