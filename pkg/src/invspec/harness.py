"""Experiment orchestration: forward runs, inversions, round trips, sweeps.

Commands are pure functions of an ExperimentConfig; every random choice
is drawn from a generator seeded in the config, so reruns are
bit-identical.  All artifacts are flat files in the output directory.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .forward import (
    AsymptoticsReport,
    SpectralDataSet,
    SpectralDatum,
    asymptotics_report,
    compute_spectral_data,
    validate_spectral_data,
)
from .funcspace import GridFunction, integrate, sobolev_norm
from .inverse import ReconstructionReport, reconstruct_from_data
from .presets import make_preset
from .quasidiff import CoefficientSet

DEFAULT_SCALES = (1e-4, 2e-4, 4e-4, 8e-4)
ASYMPTOTICS_MIN_N = 10


@dataclass
class PerturbationSpec:
    """Relative perturbation applied to the lowest-l spectral data.

    Each datum with l <= l_max gets lambda *= 1 + m*r*exp(i*phase) and
    beta *= 1 + m*r'*exp(i*phase) with r, r' drawn from [0.5, 1] by the
    seeded generator.  Low l entries are the least separated ones, so
    they stress the disjointness gates hardest.
    """

    magnitude: float = 0.0
    l_max: int = 3
    phase: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.magnitude):
            raise ValueError("perturbation magnitude must be finite")
        if self.l_max < 1:
            raise ValueError("l_max must be at least 1")


@dataclass
class ExperimentConfig:
    n: int
    grid_size: int = 2000
    N: int = 5
    model: str = "zero"
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    scales: Sequence[float] = DEFAULT_SCALES
    tol: float = 1e-9
    out_dir: str = "."
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("order must be at least 2")
        if self.N < 1:
            raise ValueError("truncation must be at least 1")
        if self.grid_size < 200:
            raise ValueError("grid size must be at least 200")


@dataclass
class StabilityRow:
    omega: float
    errors: Dict[int, float]      # k -> ||p_k - p~_k|| in the k-th norm
    condition: float              # smallest singular-value ratio seen
    failed: str = ""              # empty, or the failure reason


@dataclass
class StabilityReport:
    rows: List[StabilityRow]
    slope: Dict[int, float]

    def __post_init__(self):
        self.rows.sort(key=lambda r: r.omega)


# ---------------------------------------------------------------- model spec

def load_model(spec: str, n: int, grid_size: int) -> CoefficientSet:
    """Named preset, or a coefficient CSV written by save_coefficients."""
    if spec in ("zero", "smooth-poly", "rough-sigma"):
        return make_preset(spec, n, grid_size)
    if os.path.exists(spec):
        return load_coefficients(spec, n)
    raise ValueError(f"model {spec!r} is neither a preset nor a file")


# ---------------------------------------------------------------- files

def save_spectral_data(ds: SpectralDataSet, path: str) -> None:
    rows = [{"l": d.l, "k": d.k,
             "lambda": [float(np.real(d.lam)), float(np.imag(d.lam))],
             "beta": [float(np.real(d.beta)), float(np.imag(d.beta))]}
            for d in sorted(ds.data, key=lambda d: (d.k, d.l))]
    payload = {"n": ds.n, "N": ds.N, "data": rows}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_spectral_data(path: str) -> SpectralDataSet:
    with open(path) as fh:
        payload = json.load(fh)
    data = [SpectralDatum(int(r["l"]), int(r["k"]),
                          complex(r["lambda"][0], r["lambda"][1]),
                          complex(r["beta"][0], r["beta"][1]))
            for r in payload["data"]]
    return SpectralDataSet(int(payload["n"]), int(payload["N"]), data)


def save_coefficients(c: CoefficientSet, path: str) -> None:
    names = ["sigma"] + [f"p{k}" for k in range(1, c.n - 1)]
    header = "x, " + ", ".join(f"{nm}_re, {nm}_im" for nm in names)
    funcs = [c.sigma] + [c.p[k] for k in range(1, c.n - 1)]
    xs = c.sigma.x
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i, x in enumerate(xs):
            cells = [f"{x:.17g}"]
            for f in funcs:
                v = complex(f.values[i])
                cells.append(f"{v.real:.17g}")
                cells.append(f"{v.imag:.17g}")
            fh.write(", ".join(cells) + "\n")


def load_coefficients(path: str, n: int) -> CoefficientSet:
    with open(path) as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        header = next(reader)
        rows = [[float(cell) for cell in row] for row in reader if row]
    arr = np.asarray(rows)
    grid_size = arr.shape[0] - 1
    expected = 1 + 2 * (n - 1)
    if arr.shape[1] != expected:
        raise ValueError(
            f"coefficient file has {arr.shape[1]} columns, order {n} "
            f"needs {expected}")
    sigma = GridFunction(grid_size, arr[:, 1] + 1j * arr[:, 2],
                         smoothness_tag=1)
    p = {}
    for k in range(1, n - 1):
        col = 1 + 2 * k
        p[k] = GridFunction(grid_size, arr[:, col] + 1j * arr[:, col + 1],
                            smoothness_tag=max(1, k - 1))
    return CoefficientSet(n, sigma, p)


# ---------------------------------------------------------------- perturb

def apply_perturbation(ds: SpectralDataSet,
                       spec: PerturbationSpec) -> SpectralDataSet:
    """Perturbed copy of ds; the draw order is fixed by (k, l) sorting."""
    if spec.magnitude == 0.0:
        return SpectralDataSet(ds.n, ds.N, list(ds.data))
    rng = np.random.default_rng(spec.seed)
    rot = complex(math.cos(spec.phase), math.sin(spec.phase))
    out = []
    for d in sorted(ds.data, key=lambda d: (d.k, d.l)):
        lam, beta = complex(d.lam), complex(d.beta)
        if d.l <= spec.l_max:
            r1 = rng.uniform(0.5, 1.0)
            r2 = rng.uniform(0.5, 1.0)
            lam *= 1.0 + spec.magnitude * r1 * rot
            beta *= 1.0 + spec.magnitude * r2 * rot
        out.append(SpectralDatum(d.l, d.k, lam, beta))
    return SpectralDataSet(ds.n, ds.N, out)


def spectral_discrepancy(a: SpectralDataSet, b: SpectralDataSet) -> float:
    """Max relative difference over all eigenvalues and weight numbers."""
    worst = 0.0
    for da in a.data:
        db = b.get(da.l, da.k)
        worst = max(worst, abs(da.lam - db.lam) / max(abs(db.lam), 1.0))
        worst = max(worst, abs(da.beta - db.beta) / max(abs(db.beta), 1.0))
    return worst


def coefficient_errors(c: CoefficientSet,
                       c_ref: CoefficientSet) -> Dict[int, float]:
    """Per-k error norms: k = 0 uses the mean-zero L2 gauge of sigma,
    k >= 1 the W_2^{k-1} norm of p_k - p~_k."""
    dsig = c.sigma - c_ref.sigma
    dsig = dsig - integrate(dsig)
    errs = {0: sobolev_norm(dsig, order=0)}
    for k in range(1, c.n - 1):
        errs[k] = sobolev_norm(c.p[k] - c_ref.p[k], order=k - 1)
    return errs


# ---------------------------------------------------------------- commands

def _out(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def cmd_forward(cfg: ExperimentConfig) -> str:
    """Spectral data of the model; writes JSON and an asymptotics CSV."""
    c = load_model(cfg.model, cfg.n, cfg.grid_size)
    ds = compute_spectral_data(c, cfg.N)
    path = _out(cfg, "spectral_data.json")
    save_spectral_data(ds, path)
    if cfg.N >= ASYMPTOTICS_MIN_N:
        rep = asymptotics_report(ds)
        with open(_out(cfg, "asymptotics.csv"), "w") as fh:
            fh.write("k, l, kappa_abs, partial_l2\n")
            for k in sorted(rep.kappa):
                part = 0.0
                for i, val in enumerate(rep.kappa[k]):
                    part = math.hypot(part, abs(val))
                    fh.write(f"{k}, {i + 1}, {abs(val):.17g}, "
                             f"{part:.17g}\n")
    return path


def cmd_invert(data_path: str, cfg: ExperimentConfig) -> str:
    """Reconstruction from a spectral-data file; writes coefficients CSV
    and an inversion report CSV."""
    ds = load_spectral_data(data_path)
    validate_spectral_data(ds)
    c_model = load_model(cfg.model, cfg.n, cfg.grid_size)
    rep = reconstruct_from_data(ds, c_model)
    coeff_path = _out(cfg, "coefficients.csv")
    save_coefficients(rep.coefficients, coeff_path)
    errs = coefficient_errors(rep.coefficients, c_model)
    with open(_out(cfg, "inversion_report.csv"), "w") as fh:
        fh.write("quantity, value\n")
        fh.write(f"omega, {rep.profile.omega:.17g}\n")
        fh.write(f"residual_max, {rep.residual_max:.17g}\n")
        fh.write(f"sv_ratio_min, {rep.sv_ratio_min:.17g}\n")
        fh.write(f"solver_tol, {cfg.tol:.17g}\n")
        for k in sorted(errs):
            fh.write(f"shift_norm_k{k}, {errs[k]:.17g}\n")
    return coeff_path


def cmd_roundtrip(cfg: ExperimentConfig) -> float:
    """forward -> perturb -> invert -> forward -> compare.

    Returns the max relative spectral discrepancy and writes it with the
    run parameters to roundtrip_report.csv.
    """
    c_model = load_model(cfg.model, cfg.n, cfg.grid_size)
    md = compute_spectral_data(c_model, cfg.N)
    td = apply_perturbation(md, cfg.perturbation)
    validate_spectral_data(td)
    rep = reconstruct_from_data(td, c_model, md)
    back = compute_spectral_data(rep.coefficients, cfg.N)
    disc = spectral_discrepancy(back, td)
    errs = coefficient_errors(rep.coefficients, c_model)
    with open(_out(cfg, "roundtrip_report.csv"), "w") as fh:
        fh.write("quantity, value\n")
        fh.write(f"magnitude, {cfg.perturbation.magnitude:.17g}\n")
        fh.write(f"omega, {rep.profile.omega:.17g}\n")
        fh.write(f"spectral_discrepancy, {disc:.17g}\n")
        fh.write(f"residual_max, {rep.residual_max:.17g}\n")
        fh.write(f"sv_ratio_min, {rep.sv_ratio_min:.17g}\n")
        fh.write(f"solver_tol, {cfg.tol:.17g}\n")
        for k in sorted(errs):
            fh.write(f"shift_norm_k{k}, {errs[k]:.17g}\n")
    return disc


def _rescale_to_omega(md: SpectralDataSet, td: SpectralDataSet,
                      target: float, omega: float) -> SpectralDataSet:
    """Scale the data differences so omega hits target exactly; omega is
    1-homogeneous in the differences."""
    fac = target / omega
    out = []
    for d in td.data:
        m = md.get(d.l, d.k)
        out.append(SpectralDatum(
            d.l, d.k,
            complex(m.lam) + fac * (complex(d.lam) - complex(m.lam)),
            complex(m.beta) + fac * (complex(d.beta) - complex(m.beta))))
    return SpectralDataSet(td.n, td.N, out)


def cmd_stability_sweep(cfg: ExperimentConfig) -> StabilityReport:
    """Round trips across perturbation scales; fits the log-log slope of
    each coefficient error norm against omega over the three smallest
    successful scales.  Writes stability_report.csv and a gnuplot script.
    """
    from .inverse import perturbation_profile

    c_model = load_model(cfg.model, cfg.n, cfg.grid_size)
    md = compute_spectral_data(c_model, cfg.N)
    base_spec = PerturbationSpec(
        magnitude=1e-4, l_max=cfg.perturbation.l_max,
        phase=cfg.perturbation.phase, seed=cfg.perturbation.seed)
    td_base = apply_perturbation(md, base_spec)
    omega_base = perturbation_profile(td_base, md).omega

    rows: List[StabilityRow] = []
    for target in cfg.scales:
        td = _rescale_to_omega(md, td_base, target, omega_base)
        try:
            validate_spectral_data(td)
            rep = reconstruct_from_data(td, c_model, md)
        except Exception as exc:    # noqa: BLE001 - row records the reason
            rows.append(StabilityRow(target, {}, math.nan,
                                     failed=type(exc).__name__))
            continue
        rows.append(StabilityRow(
            target, coefficient_errors(rep.coefficients, c_model),
            rep.sv_ratio_min))

    good = [r for r in rows if not r.failed and r.omega > 0.0]
    slope: Dict[int, float] = {}
    if len(good) >= 2:
        fit_rows = sorted(good, key=lambda r: r.omega)[:3]
        for k in range(0, cfg.n - 1):
            xs = np.log([r.omega for r in fit_rows])
            ys = np.log([max(r.errors[k], 1e-300) for r in fit_rows])
            slope[k] = float(np.polyfit(xs, ys, 1)[0])

    report = StabilityReport(rows, slope)
    csv_path = _out(cfg, "stability_report.csv")
    with open(csv_path, "w") as fh:
        ks = list(range(0, cfg.n - 1))
        fh.write("omega, " + ", ".join(f"err_k{k}" for k in ks)
                 + ", condition, failed\n")
        for r in report.rows:
            cells = [f"{r.omega:.17g}"]
            for k in ks:
                cells.append(f"{r.errors.get(k, math.nan):.17g}")
            cells.append(f"{r.condition:.17g}")
            cells.append(r.failed)
            fh.write(", ".join(cells) + "\n")
        fh.write("slope, " + ", ".join(
            f"{report.slope.get(k, math.nan):.17g}" for k in ks)
            + ", , \n")
    with open(_out(cfg, "stability_plot.gp"), "w") as fh:
        fh.write("set logscale xy\n")
        fh.write('set xlabel "omega"\n')
        fh.write('set ylabel "coefficient error"\n')
        fh.write("set datafile separator comma\n")
        plots = ", ".join(
            f"'stability_report.csv' every ::1 using 1:{2 + k} "
            f"with linespoints title 'k={k}'" for k in ks)
        fh.write("plot " + plots + "\n")
    return report
