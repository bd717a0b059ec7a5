"""File formats, perturbation machinery, CLI commands and exit codes."""

import json
import math

import numpy as np
import pytest

import invspec as iv
from invspec import cli
from invspec.harness import _rescale_to_omega

from conftest import copy_data

M = 400  # coarse grid keeps command-level tests quick


@pytest.fixture(scope="module")
def md2():
    return iv.compute_spectral_data(iv.zero_coefficients(2, M), 4)


@pytest.fixture(scope="module")
def md3():
    return iv.compute_spectral_data(iv.zero_coefficients(3, M), 3)


# ---------------------------------------------------------------- validation

def test_config_invariants():
    with pytest.raises(ValueError):
        iv.ExperimentConfig(n=1)
    with pytest.raises(ValueError):
        iv.ExperimentConfig(n=3, N=0)
    with pytest.raises(ValueError):
        iv.ExperimentConfig(n=3, grid_size=100)
    with pytest.raises(ValueError):
        iv.PerturbationSpec(magnitude=math.inf)
    with pytest.raises(ValueError):
        iv.PerturbationSpec(l_max=0)


def test_load_model_names():
    for name in iv.PRESET_NAMES:
        c = iv.load_model(name, 3, 400)
        assert c.n == 3 and c.grid_size == 400
    with pytest.raises(ValueError, match="neither a preset nor a file"):
        iv.load_model("nosuch", 3, 400)


@pytest.mark.parametrize("name", ["zero", "smooth-poly", "rough-sigma"])
@pytest.mark.parametrize("n", [2, 3, 4])
def test_preset_sigma_mean_zero(name, n):
    c = iv.make_preset(name, n, 600)
    assert abs(iv.integrate(c.sigma)) < 1e-12
    assert set(c.p) == set(range(1, n - 1))


# ---------------------------------------------------------------- file formats

def test_spectral_data_file_roundtrip(tmp_path, md3):
    path = str(tmp_path / "sd.json")
    iv.save_spectral_data(md3, path)
    payload = json.loads(open(path).read())
    assert set(payload) == {"n", "N", "data"}
    keys = [(r["k"], r["l"]) for r in payload["data"]]
    assert keys == sorted(keys)
    assert set(payload["data"][0]) == {"l", "k", "lambda", "beta"}
    back = iv.load_spectral_data(path)
    assert back.n == md3.n and back.N == md3.N
    for d, b in zip(sorted(md3.data, key=lambda d: (d.k, d.l)), back.data):
        assert (d.l, d.k) == (b.l, b.k)
        assert complex(d.lam) == complex(b.lam)
        assert complex(d.beta) == complex(b.beta)


def test_coefficient_file_roundtrip(tmp_path):
    c = iv.make_preset("smooth-poly", 4, M)
    path = str(tmp_path / "c.csv")
    iv.save_coefficients(c, path)
    header = open(path).readline().strip()
    assert header == "x, sigma_re, sigma_im, p1_re, p1_im, p2_re, p2_im"
    back = iv.load_coefficients(path, 4)
    assert np.max(np.abs(back.sigma.values - c.sigma.values)) < 1e-15
    for k in (1, 2):
        assert np.max(np.abs(back.p[k].values - c.p[k].values)) < 1e-15
    with pytest.raises(ValueError, match="columns"):
        iv.load_coefficients(path, 3)


# ---------------------------------------------------------------- perturbation

def test_perturbation_deterministic(md3):
    spec = iv.PerturbationSpec(magnitude=1e-3, l_max=2, seed=42)
    a = iv.apply_perturbation(md3, spec)
    b = iv.apply_perturbation(md3, spec)
    assert iv.spectral_discrepancy(a, b) == 0.0
    # untouched above l_max, touched below
    for d in a.data:
        ref = md3.get(d.l, d.k)
        if d.l > 2:
            assert d.lam == ref.lam and d.beta == ref.beta
        else:
            assert d.lam != ref.lam and d.beta != ref.beta
            assert abs(d.lam / ref.lam - 1.0) <= 1e-3 + 1e-12


def test_perturbation_phase(md3):
    spec = iv.PerturbationSpec(magnitude=1e-3, l_max=1, phase=math.pi / 2,
                               seed=3)
    td = iv.apply_perturbation(md3, spec)
    d = td.get(1, 1)
    ref = md3.get(1, 1)
    ratio = complex(d.lam) / complex(ref.lam) - 1.0
    assert abs(ratio.real) < 1e-12      # rotation moved it off the real axis
    assert ratio.imag > 1e-4


def test_zero_magnitude_copies(md3):
    td = iv.apply_perturbation(md3, iv.PerturbationSpec(magnitude=0.0))
    assert iv.spectral_discrepancy(td, md3) == 0.0


def test_omega_homogeneous(md3):
    s1 = iv.PerturbationSpec(magnitude=1e-4, l_max=2, seed=5)
    s2 = iv.PerturbationSpec(magnitude=2e-4, l_max=2, seed=5)
    om1 = iv.perturbation_profile(iv.apply_perturbation(md3, s1), md3).omega
    om2 = iv.perturbation_profile(iv.apply_perturbation(md3, s2), md3).omega
    assert om2 == pytest.approx(2.0 * om1, rel=1e-12)
    td = _rescale_to_omega(md3, iv.apply_perturbation(md3, s1), 7e-4, om1)
    assert iv.perturbation_profile(td, md3).omega == pytest.approx(7e-4,
                                                                   rel=1e-12)


def test_coefficient_errors_gauge():
    a = iv.make_preset("smooth-poly", 3, M)
    shifted = iv.CoefficientSet(3, a.sigma + 0.37,
                                {1: a.p[1].copy()})
    errs = iv.coefficient_errors(shifted, a)
    assert errs[0] < 1e-14      # constant sigma shifts are gauge
    assert errs[1] == 0.0


# ---------------------------------------------------------------- commands

def test_forward_deterministic(tmp_path):
    cfg_a = iv.ExperimentConfig(n=2, grid_size=M, N=3, model="zero",
                                out_dir=str(tmp_path / "a"))
    cfg_b = iv.ExperimentConfig(n=2, grid_size=M, N=3, model="zero",
                                out_dir=str(tmp_path / "b"))
    pa = iv.cmd_forward(cfg_a)
    pb = iv.cmd_forward(cfg_b)
    assert open(pa, "rb").read() == open(pb, "rb").read()


def test_forward_asymptotics_file(tmp_path):
    cfg = iv.ExperimentConfig(n=2, grid_size=M, N=10, model="zero",
                              out_dir=str(tmp_path))
    iv.cmd_forward(cfg)
    lines = open(tmp_path / "asymptotics.csv").read().splitlines()
    assert lines[0] == "k, l, kappa_abs, partial_l2"
    assert len(lines) == 11
    cfg_small = iv.ExperimentConfig(n=2, grid_size=M, N=3, model="zero",
                                    out_dir=str(tmp_path))
    iv.cmd_forward(cfg_small)
    # below the asymptotic range no report is claimed


def test_invert_command(tmp_path, md2):
    td = iv.apply_perturbation(
        md2, iv.PerturbationSpec(magnitude=1e-3, l_max=2, seed=1))
    data_path = str(tmp_path / "sd.json")
    iv.save_spectral_data(td, data_path)
    cfg = iv.ExperimentConfig(n=2, grid_size=M, N=4, model="zero",
                              out_dir=str(tmp_path))
    coeff_path = iv.cmd_invert(data_path, cfg)
    c = iv.load_coefficients(coeff_path, 2)
    assert c.grid_size == M
    report = dict(
        line.split(", ") for line in
        open(tmp_path / "inversion_report.csv").read().splitlines()[1:])
    assert float(report["omega"]) > 0.0
    assert float(report["residual_max"]) < 1e-8
    assert "shift_norm_k0" in report


def test_roundtrip_command(tmp_path):
    cfg = iv.ExperimentConfig(
        n=2, grid_size=M, N=4, model="zero",
        perturbation=iv.PerturbationSpec(magnitude=1e-4, l_max=2, seed=2),
        out_dir=str(tmp_path))
    disc = iv.cmd_roundtrip(cfg)
    assert disc < 1e-5
    text = open(tmp_path / "roundtrip_report.csv").read()
    assert "spectral_discrepancy" in text


def test_stability_sweep_command(tmp_path):
    # scales sit above the coarse-grid bias floor so the slope is clean
    cfg = iv.ExperimentConfig(
        n=2, grid_size=M, N=4, model="zero",
        perturbation=iv.PerturbationSpec(l_max=2, seed=0),
        scales=(4e-3, 1e-3, 2e-3),
        out_dir=str(tmp_path))
    rep = iv.cmd_stability_sweep(cfg)
    omegas = [r.omega for r in rep.rows]
    assert omegas == sorted(omegas) == [1e-3, 2e-3, 4e-3]
    assert not any(r.failed for r in rep.rows)
    assert rep.slope[0] == pytest.approx(1.0, abs=0.2)
    lines = open(tmp_path / "stability_report.csv").read().splitlines()
    assert lines[0] == "omega, err_k0, condition, failed"
    assert lines[-1].startswith("slope, ")
    gp = open(tmp_path / "stability_plot.gp").read()
    assert "set logscale xy" in gp
    assert "'stability_report.csv'" in gp      # relative reference only


# ---------------------------------------------------------------- CLI

def test_cli_forward_and_exit_codes(tmp_path, md3):
    out = str(tmp_path / "fwd")
    code = cli.main(["forward", "--order", "2", "--grid-size", str(M),
                     "--num-eigenvalues", "3", "--model", "zero",
                     "--out", out])
    assert code == 0
    ds = iv.load_spectral_data(out + "/spectral_data.json")
    assert ds.n == 2 and ds.N == 3

    # S-2 violation in an input file must exit 2
    bad = copy_data(md3)
    bad.get(1, 2).lam = bad.get(1, 1).lam
    bad_path = str(tmp_path / "bad.json")
    iv.save_spectral_data(bad, bad_path)
    code = cli.main(["invert", bad_path, "--order", "3",
                     "--grid-size", str(M), "--num-eigenvalues", "3",
                     "--model", "zero", "--out", str(tmp_path)])
    assert code == 2

    # numerical failure (unknown model) exits 1
    code = cli.main(["forward", "--order", "2", "--grid-size", str(M),
                     "--model", "nosuch", "--out", out])
    assert code == 1


def test_cli_scales_parsing(tmp_path):
    out = str(tmp_path / "sw")
    code = cli.main(["stability-sweep", "--order", "2", "--grid-size",
                     str(M), "--num-eigenvalues", "3", "--model", "zero",
                     "--perturb-lmax", "2", "--scales", "1e-4,2e-4",
                     "--out", out])
    assert code == 0
    lines = open(out + "/stability_report.csv").read().splitlines()
    assert len(lines) == 4  # header, two rows, slope line
