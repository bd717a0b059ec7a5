"""Shared fixtures and small helpers for the test suite."""

import numpy as np
import pytest

import invspec as iv

GRID = 2000


def copy_data(ds):
    return iv.SpectralDataSet(
        ds.n, ds.N,
        [iv.SpectralDatum(d.l, d.k, d.lam, d.beta) for d in ds.data])


def perturb_data(ds, mag, lmax, seed=1):
    """Multiplicative perturbation on the lowest eigenvalue indices."""
    rng = np.random.default_rng(seed)
    out = copy_data(ds)
    for d in out.data:
        if d.l <= lmax:
            d.lam = d.lam * (1.0 + mag * rng.uniform(0.5, 1.0))
            d.beta = d.beta * (1.0 + mag * rng.uniform(0.5, 1.0))
    return out


def deriv4(vals, h):
    """Fourth-order finite-difference derivative, one-sided at the edges."""
    vals = np.asarray(vals)
    d = np.empty_like(vals)
    d[2:-2] = (vals[:-4] - 8 * vals[1:-3] + 8 * vals[3:-1] - vals[4:]) / (12 * h)
    c0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * h)
    c1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12 * h)
    d[0] = c0 @ vals[:5]
    d[1] = c1 @ vals[:5]
    d[-2] = -(c1 @ vals[-5:][::-1])
    d[-1] = -(c0 @ vals[-5:][::-1])
    return d


def max_rel_discrepancy(a, b):
    worst = 0.0
    for da, db in zip(a.data, b.data):
        assert (da.l, da.k) == (db.l, db.k)
        worst = max(worst, abs(da.lam - db.lam) / max(abs(db.lam), 1.0))
        worst = max(worst, abs(da.beta - db.beta) / max(abs(db.beta), 1.0))
    return worst


@pytest.fixture(scope="session")
def zero2():
    return iv.zero_coefficients(2, GRID)


@pytest.fixture(scope="session")
def zero3():
    return iv.zero_coefficients(3, GRID)


@pytest.fixture(scope="session")
def zero4():
    return iv.zero_coefficients(4, GRID)


@pytest.fixture(scope="session")
def smooth4():
    """Smooth n=4 operator with all coefficient slots populated."""
    x = np.linspace(0.0, 1.0, GRID + 1)
    sig = iv.GridFunction(GRID, 0.3 * np.sin(2 * np.pi * x) + 0.1,
                          smoothness_tag=3)
    p1 = iv.GridFunction(GRID, 0.2 * x * (1 - x), smoothness_tag=3)
    p2 = iv.GridFunction(GRID, 0.1 * np.cos(np.pi * x), smoothness_tag=3)
    return iv.CoefficientSet(4, sig, {1: p1, 2: p2})
