"""Forward problem: characteristic minors, spectra, Weyl solutions."""

import numpy as np
import pytest

import invspec as iv
from invspec import forward

from conftest import deriv4


# ------------------------------------------------------- characteristic minors

def test_delta_closed_forms_order2(zero2):
    for tau in (1.3, 2.7):
        lam = -tau * tau
        assert forward.delta(zero2, 1, 1, lam) == pytest.approx(
            np.sin(tau) / tau, rel=1e-8)
        assert forward.delta(zero2, 2, 1, lam) == pytest.approx(
            np.cos(tau), rel=1e-8)


def test_delta_at_zero_order3(zero3):
    # lambda = 0 reduces to polynomial solutions 1, x, x^2/2
    assert forward.delta(zero3, 1, 1, 0.0) == pytest.approx(0.5, rel=1e-9)
    assert forward.delta(zero3, 2, 2, 0.0) == pytest.approx(0.5, rel=1e-9)


def test_delta_clamped_order4(zero4):
    for lam in (31.7, 150.0):
        r = lam ** 0.25
        hand = (1.0 - np.cosh(r) * np.cos(r)) / (2.0 * r ** 4)
        assert forward.delta(zero4, 2, 2, lam) == pytest.approx(hand, rel=1e-8)
    assert forward.delta(zero4, 2, 2, 1e-6) == pytest.approx(1.0 / 12.0,
                                                             rel=1e-6)


def test_delta_rejects_bad_indices(zero3):
    with pytest.raises(ValueError):
        forward.delta(zero3, 3, 3, 1.0)
    with pytest.raises(ValueError):
        forward.delta(zero3, 1, 2, 1.0)  # j must be >= k


def test_dual_routes_agree():
    c = iv.zero_coefficients(3, 800)
    ctx = forward._ctx(c)
    lams = np.array([-20.0 + 3.0j, 47.0, 5.0 - 11.0j])
    for k in (1, 2):
        for star in (False, True):
            a = ctx.delta_compound(k, lams, [k, k + 1], star, 4)
            b = ctx.delta_det(k, lams, [k, k + 1], star, 4)
            rel = np.max(np.abs(a - b)) / np.max(np.abs(b))
            assert rel < 1e-10


# ------------------------------------------------------------------- spectra

def test_dirichlet_spectrum_order2(zero2):
    lams = forward.find_eigenvalues(zero2, 1, 6)
    ls = np.arange(1, 7)
    assert np.max(np.abs(lams + np.pi ** 2 * ls ** 2)
                  / (np.pi ** 2 * ls ** 2)) < 1e-8
    # beta carries the error of the differenced Delta'; 1e-5 is its level
    betas = forward.weight_numbers(zero2, {1: lams}).betas(1)
    assert np.max(np.abs(betas - 2 * np.pi ** 2 * ls ** 2)
                  / (2 * np.pi ** 2 * ls ** 2)) < 1e-5


def test_spectral_data_layout(zero3):
    ds = forward.compute_spectral_data(zero3, 4)
    assert ds.n == 3 and ds.N == 4
    assert [(d.k, d.l) for d in ds.data] == [(k, l) for k in (1, 2)
                                             for l in range(1, 5)]
    d = ds.get(2, 1)
    assert d.l == 2 and d.k == 1
    forward.validate_spectral_data(ds)


# ------------------------------------------------------------- Weyl solutions

def test_weyl_closed_form_order2(zero2):
    tau = 2.3
    phi = forward.weyl_solution(zero2, 1, -tau * tau)
    x = zero2.sigma.x
    exact = np.sin(tau * (1 - x)) / np.sin(tau)
    exact_d = -tau * np.cos(tau * (1 - x)) / np.sin(tau)
    assert np.max(np.abs(phi[:, 0] - exact)) < 1e-8 * np.max(np.abs(exact))
    assert np.max(np.abs(phi[:, 1] - exact_d)) < 1e-8 * np.max(np.abs(exact_d))


def test_weyl_last_is_fundamental(zero4):
    lam = 5.0 + 2.0j
    phi4 = forward.weyl_solution(zero4, 4, lam)
    traj = forward.integrate_fundamental(zero4, lam)
    assert np.max(np.abs(phi4 - traj[:, :, 3])) < 1e-9 * np.max(np.abs(phi4))


def test_weyl_boundary_conditions(smooth4):
    lam = 5.0 + 2.0j
    traj = forward.integrate_fundamental(smooth4, lam)
    mat = forward.weyl_matrix(smooth4, lam)
    ent = mat.entries
    for j in range(4):
        assert abs(ent[j, j] - 1.0) < 1e-8
        for k in range(j + 1, 4):
            assert abs(ent[j, k]) < 1e-8
    for k in (1, 2, 3, 4):
        phik = forward.weyl_solution(smooth4, k, lam)
        ic = phik[0, :k] - (np.arange(1, k + 1) == k)
        assert np.max(np.abs(ic)) < 1e-10
        if k < 4:
            assert np.max(np.abs(phik[-1, : 4 - k])) < 1e-8
        combo = traj @ ent[:, k - 1]
        assert np.max(np.abs(combo - phik)) < 1e-6 * max(
            1.0, np.max(np.abs(phik)))


def test_pole_rejected(zero2):
    with pytest.raises(iv.WeylPoleError):
        forward.weyl_solution(zero2, 1, -np.pi ** 2)


def test_lagrange_identity(zero3):
    lam, mu = 11.0 + 3.0j, -6.0 + 1.0j
    y = forward.weyl_solution(zero3, 2, lam)
    z = forward.weyl_solution(zero3, 3, mu, star=True)
    br = iv.quasidiff.bracket_values(z, y)
    slope = deriv4(br, zero3.sigma.h)
    target = (lam - mu) * y[:, 0] * z[:, 0]
    scale = max(np.max(np.abs(target)), 1.0)
    assert np.max(np.abs(slope - target)) < 1e-8 * scale
    # equal spectral parameters: the bracket is constant in x
    z2 = forward.weyl_solution(zero3, 3, lam, star=True)
    br2 = iv.quasidiff.bracket_values(z2, y)
    assert np.max(np.abs(br2 - br2[0])) < 1e-8 * max(np.max(np.abs(br2)), 1.0)


def test_weighted_growth_bound(zero3):
    # sup_x w_{l,k}(x) |Phi_{k+1}^{(j)}(x)| stays O(l^j)
    lams = forward.find_eigenvalues(zero3, 1, 6)
    x = zero3.sigma.x
    for l in (2, 4, 6):
        phi = forward.weyl_solution(zero3, 2, lams[l - 1])
        w = iv.inverse.weight_w(3, l, 1, x)
        for j in (0, 1):
            assert np.max(w * np.abs(phi[:, j])) <= 1.0 * l ** j


# ------------------------------------------------------------------- gating

def test_validation_gates(zero3):
    ds = forward.compute_spectral_data(zero3, 3)

    bad = iv.SpectralDataSet(3, 3, [iv.SpectralDatum(d.l, d.k, d.lam, d.beta)
                                    for d in ds.data])
    bad.get(2, 1).lam = bad.get(1, 1).lam
    with pytest.raises(iv.SpectralDataError, match=r"\(S-1\)"):
        forward.validate_spectral_data(bad)

    bad = iv.SpectralDataSet(3, 3, [iv.SpectralDatum(d.l, d.k, d.lam, d.beta)
                                    for d in ds.data])
    bad.get(2, 2).lam = bad.get(1, 1).lam
    with pytest.raises(iv.SpectralDataError, match="adjacent spectra intersect"):
        forward.validate_spectral_data(bad)

    bad = iv.SpectralDataSet(3, 3, [iv.SpectralDatum(d.l, d.k, d.lam, d.beta)
                                    for d in ds.data])
    bad.get(3, 2).beta = 0.0
    with pytest.raises(iv.SpectralDataError, match=r"\(S-3\)"):
        forward.validate_spectral_data(bad)


def test_asymptotics_gate_and_flatness(zero3):
    small = forward.compute_spectral_data(zero3, 3)
    with pytest.raises(ValueError, match="at least N = 10"):
        forward.asymptotics_report(small)
    ds = forward.compute_spectral_data(zero3, 12)
    rep = forward.asymptotics_report(ds)
    assert set(rep.kappa) == {1, 2}
    for k in (1, 2):
        assert rep.theta[k] == pytest.approx(1.0 / 6.0, rel=1e-9)
        # remainders decay fast; the tail is solver noise
        assert np.max(np.abs(rep.kappa[k][4:])) < 1e-10
        part = rep.kappa_sq_partial[k]
        assert part[-1] - part[-4] <= 0.05 * part[-1] + 1e-18
