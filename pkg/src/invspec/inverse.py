"""Coefficient reconstruction from spectral data via the main equation.

Given the spectral data (eigenvalues and weight numbers of the n-1
boundary value problems) of an unknown operator close to a known model,
the pipeline recovers sigma and p_1..p_{n-2}:

    perturbation_profile -> assemble_system -> solve_main_equation
        -> recover_phi / build_eta -> series tables -> reconstruct

Indices l > N carry model data by construction (truncated data), so all
series reduce to finite sums over the active set {l <= N : xi_l > 0};
unperturbed indices cancel pairwise and are excluded from the unknowns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .funcspace import GridFunction, antiderivative, differentiate
from .quasidiff import CoefficientSet, bracket_values
from .forward import (
    SpectralDataError,
    SpectralDataSet,
    compute_spectral_data,
    validate_spectral_data,
    weyl_solution,
)

# lambda values closer than this (relative) trip the disjointness gate;
# same-class pairs switch to the integral form well before that.
COINCIDENT_RTOL = 1e-10
SAME_K_INTEGRAL_RTOL = 1e-6
# numerical singularity gate on I - R(x): min over x of sv_min/sv_max
SV_RATIO_FLOOR = 1e-12
CHI_TERMS = 20000


class SingularMainEquationError(RuntimeError):
    """I - R(x) is numerically singular at some grid node."""


# ------------------------------------------------------------------ indices

@dataclass(frozen=True, order=True)
class VIndex:
    """One spectral-data slot: eps = 0 tags the target data, 1 the model."""

    l: int
    k: int
    eps: int

    def __post_init__(self):
        if self.l < 1 or self.k < 1 or self.eps not in (0, 1):
            raise ValueError(f"bad index (l={self.l}, k={self.k}, eps={self.eps})")


@dataclass
class PerturbationProfile:
    """Weighted distances between two spectral data sets."""

    xi: np.ndarray
    omega: float
    chi: np.ndarray


@dataclass
class DerivStack:
    """A grid function together with its classical derivatives.

    values[j] is the j-th derivative sampled on the grid, j = 0..depth.
    """

    values: np.ndarray

    @property
    def depth(self) -> int:
        return self.values.shape[0] - 1

    @property
    def grid_size(self) -> int:
        return self.values.shape[1] - 1

    def deriv(self, j: int) -> np.ndarray:
        return self.values[j]


def _datum_lam_beta(data: SpectralDataSet, model: SpectralDataSet,
                    v: VIndex) -> Tuple[complex, complex]:
    src = data if v.eps == 0 else model
    d = src.get(v.l, v.k)
    return complex(d.lam), complex(d.beta)


def perturbation_profile(data: SpectralDataSet,
                         model_data: SpectralDataSet) -> PerturbationProfile:
    """xi_l, Omega and chi_l for a pair of spectral data sets."""
    if data.n != model_data.n or data.N != model_data.N:
        raise ValueError("spectral data sets must share n and N")
    n, N = data.n, data.N
    xi = np.zeros(N)
    for l in range(1, N + 1):
        for k in range(1, n):
            d = data.get(l, k)
            dm = model_data.get(l, k)
            xi[l - 1] += (l ** -(n - 1)) * abs(d.lam - dm.lam) \
                + (l ** -n) * abs(d.beta - dm.beta)
    ls = np.arange(1, N + 1, dtype=float)
    omega = float(np.sqrt(np.sum((ls ** (n - 2) * xi) ** 2)))
    ks = np.arange(1, CHI_TERMS + 1, dtype=float)
    chi = np.sqrt([np.sum(1.0 / (ks ** 2 * (np.abs(l - ks) + 1.0) ** 2))
                   for l in range(1, N + 1)])
    return PerturbationProfile(xi=xi, omega=omega, chi=chi)


def weight_w(n: int, l: int, k: int, x: np.ndarray) -> np.ndarray:
    """Normalizing weight w_{l,k}(x) = l^{-k} exp(-x l cot(pi k / n))."""
    cot = math.cos(math.pi * k / n) / math.sin(math.pi * k / n)
    return float(l) ** (-k) * np.exp(-np.asarray(x) * l * cot)


def _lcot(n: int, l: int, k: int) -> float:
    return l * math.cos(math.pi * k / n) / math.sin(math.pi * k / n)


# ------------------------------------------------------------------ G kernel

def _g_values(n: int, h: float, beta_v: complex, k: int,
              star_traj: np.ndarray, phi_traj: np.ndarray,
              lam_v: complex, lam_v0: complex, same_k: bool) -> np.ndarray:
    """G_{v,v0} on the grid from the two model trajectories.

    The Lagrange bracket of the star and direct solutions is linear in x
    slope (lam_v0 - lam_v) * phi * star; for same-class pairs its value
    at 0 vanishes, so coincident lambdas reduce to the integral form.
    """
    sgn = (-1.0) ** (n - k)
    denom = lam_v0 - lam_v
    scale = max(abs(lam_v), abs(lam_v0), 1.0)
    if same_k and abs(denom) <= SAME_K_INTEGRAL_RTOL * scale:
        prod = phi_traj[:, 0] * star_traj[:, 0]
        quot = cumulative_trapezoid(prod, dx=h, initial=0.0)
    elif abs(denom) <= COINCIDENT_RTOL * scale:
        raise SpectralDataError(
            "disjointness",
            "spectra not disjoint; perturb input "
            f"(lambda={lam_v:.9g} repeats across classes; "
            f"a jitter of 1e-12*|lambda| suffices)",
        )
    else:
        quot = bracket_values(star_traj, phi_traj) / denom
    return sgn * beta_v * quot


def build_G(c_model: CoefficientSet, v: VIndex, v0: VIndex,
            data: SpectralDataSet, model_data: SpectralDataSet) -> GridFunction:
    """Kernel function G_{v,v0} of the main equation, on the grid.

    Rejects coincident lambda values; the system assembly handles the
    same-class coincidences (including v = v0) by the integral limit.
    """
    n = c_model.n
    lam_v, beta_v = _datum_lam_beta(data, model_data, v)
    lam_v0, _ = _datum_lam_beta(data, model_data, v0)
    scale = max(abs(lam_v), abs(lam_v0), 1.0)
    if abs(lam_v0 - lam_v) <= COINCIDENT_RTOL * scale:
        raise SpectralDataError(
            "disjointness",
            "spectra not disjoint; perturb input "
            f"(lambda coincides for (l={v.l},k={v.k},eps={v.eps}) and "
            f"(l={v0.l},k={v0.k},eps={v0.eps}); "
            "a jitter of 1e-12*|lambda| suffices)",
        )
    star = weyl_solution(c_model, n - v.k + 1, lam_v, star=True)
    phi = weyl_solution(c_model, v0.k + 1, lam_v0)
    g = _g_values(n, c_model.sigma.h, beta_v, v.k, star, phi,
                  lam_v, lam_v0, v.k == v0.k)
    return GridFunction(c_model.grid_size, g, smoothness_tag=n - 2)


# ------------------------------------------------------------------ system

@dataclass
class MainEquationSystem:
    """The finite main equation (I - R(x)) psi(x) = psi_tilde(x).

    Unknown slot 2p + eps holds psi for the eps-variant of the p-th
    active (l, k) pair; pairs are sorted by (k, l).
    """

    n: int
    N: int
    grid_size: int
    active: List[VIndex]
    pairs: List[Tuple[int, int]]
    profile: PerturbationProfile
    psi_tilde: np.ndarray
    R_tilde: np.ndarray
    psi: Optional[np.ndarray] = None
    residual_max: float = 0.0
    sv_ratio_min: float = math.inf
    # internal stacks for the exact derivative chain
    _c_model: CoefficientSet = None
    _data: SpectralDataSet = None
    _model_data: SpectralDataSet = None
    _lam: Dict[VIndex, complex] = field(default_factory=dict)
    _beta: Dict[VIndex, complex] = field(default_factory=dict)
    _phi_traj: Dict[VIndex, np.ndarray] = field(default_factory=dict)
    _star_stack: Dict[VIndex, DerivStack] = field(default_factory=dict)
    _G_d: List[np.ndarray] = field(default_factory=list)
    _psi_tilde_d: List[np.ndarray] = field(default_factory=list)
    _R_d: List[np.ndarray] = field(default_factory=list)
    _psi_d: List[np.ndarray] = field(default_factory=list)
    _wcol: np.ndarray = None
    _lcot_col: np.ndarray = None
    _L: np.ndarray = None
    _Rt: np.ndarray = None
    _B: np.ndarray = None

    def slot(self, v: VIndex) -> int:
        p = self.pairs.index((v.l, v.k))
        return 2 * p + v.eps


def _p_deriv_table(c: CoefficientSet, max_order: int) -> Dict[Tuple[int, int], np.ndarray]:
    table: Dict[Tuple[int, int], np.ndarray] = {}
    for idx, pk in c.p.items():
        cur = pk
        table[(idx, 0)] = cur.values
        for o in range(1, min(max_order, cur.smoothness_tag) + 1):
            cur = differentiate(cur)
            table[(idx, o)] = cur.values
    return table


def _star_classical_stack(c: CoefficientSet, traj: np.ndarray, upto: int,
                          pder: Dict[Tuple[int, int], np.ndarray]) -> DerivStack:
    """Classical derivatives 0..upto of a star-side solution.

    Star quasi-derivatives of order >= 2 mix in lower classical
    derivatives with coefficients built from the model p's; the relation
    is triangular, so forward substitution inverts it.
    """
    n = c.n
    m1 = traj.shape[0]
    out = np.zeros((upto + 1, m1), dtype=np.complex128)
    out[0] = traj[:, 0]
    if upto >= 1:
        out[1] = traj[:, 1]
    for nu in range(2, upto + 1):
        acc = traj[:, nu].copy()
        for j in range(nu - 1):
            coef = np.zeros(m1, dtype=np.complex128)
            for s in range(j, nu - 1):
                coef += ((-1.0) ** (s + nu)) * math.comb(s, j) \
                    * pder[(n - nu + s, s - j)]
            acc -= coef * out[j]
        out[nu] = acc
    return DerivStack(out)


def assemble_system(c_model: CoefficientSet, data: SpectralDataSet,
                    model_data: SpectralDataSet) -> MainEquationSystem:
    """Build psi_tilde, R_tilde and their x-derivative stacks."""
    validate_spectral_data(data)
    validate_spectral_data(model_data)
    if data.n != c_model.n:
        raise ValueError("data order does not match the model operator")
    n, N = data.n, data.N
    m1 = c_model.grid_size + 1
    h = c_model.sigma.h
    x = c_model.sigma.x
    depth = n - 2
    profile = perturbation_profile(data, model_data)

    pairs = [(l, k) for k in range(1, n) for l in range(1, N + 1)
             if profile.xi[l - 1] > 0.0]
    pairs.sort(key=lambda lk: (lk[1], lk[0]))
    P = len(pairs)
    active = [VIndex(l, k, e) for (l, k) in pairs for e in (0, 1)]

    sys = MainEquationSystem(
        n=n, N=N, grid_size=c_model.grid_size, active=active, pairs=pairs,
        profile=profile,
        psi_tilde=np.zeros((m1, 2 * P), dtype=np.complex128),
        R_tilde=np.zeros((m1, 2 * P, 2 * P), dtype=np.complex128),
        _c_model=c_model, _data=data, _model_data=model_data,
    )
    if P == 0:
        return sys

    pder = _p_deriv_table(c_model, max(0, n - 4))
    for v in active:
        lam_v, beta_v = _datum_lam_beta(data, model_data, v)
        sys._lam[v] = lam_v
        sys._beta[v] = beta_v
        sys._phi_traj[v] = weyl_solution(c_model, v.k + 1, lam_v)
        star = weyl_solution(c_model, n - v.k + 1, lam_v, star=True)
        sys._star_stack[v] = _star_classical_stack(c_model, star, depth, pder)
        sys._star_stack[v]._quasi = star

    # column data shared by both eps slots of a pair
    wcol = np.empty((m1, 2 * P))
    lcot_col = np.empty(2 * P)
    xi_col = np.empty(2 * P)
    for p, (l, k) in enumerate(pairs):
        w = weight_w(n, l, k, x)
        wcol[:, 2 * p] = w
        wcol[:, 2 * p + 1] = w
        lcot_col[2 * p] = lcot_col[2 * p + 1] = _lcot(n, l, k)
        xi_col[2 * p] = xi_col[2 * p + 1] = profile.xi[l - 1]
    sys._wcol = wcol
    sys._lcot_col = lcot_col

    # constant block transforms: rows L, columns Rt (psi scale), B (back)
    L = np.zeros((2 * P, 2 * P))
    Rt = np.zeros((2 * P, 2 * P))
    B = np.zeros((2 * P, 2 * P))
    for p in range(P):
        xi = xi_col[2 * p]
        L[2 * p:2 * p + 2, 2 * p:2 * p + 2] = [[1.0 / xi, -1.0 / xi], [0.0, 1.0]]
        Rt[2 * p:2 * p + 2, 2 * p:2 * p + 2] = [[xi, 1.0], [0.0, -1.0]]
        B[2 * p:2 * p + 2, 2 * p:2 * p + 2] = [[xi, 1.0], [0.0, 1.0]]
    sys._L, sys._Rt, sys._B = L, Rt, B

    # G stacks: G_d[b][x, row(v0), col(v)] = b-th derivative of G_{v,v0}
    G0 = np.zeros((m1, 2 * P, 2 * P), dtype=np.complex128)
    for col, v in enumerate(active):
        star_traj = sys._star_stack[v]._quasi
        for row, v0 in enumerate(active):
            G0[:, row, col] = _g_values(
                n, h, sys._beta[v], v.k, star_traj, sys._phi_traj[v0],
                sys._lam[v], sys._lam[v0], v.k == v0.k)
    sys._G_d = [G0]
    for b in range(1, depth + 1):
        Gb = np.zeros_like(G0)
        for col, v in enumerate(active):
            sgn = (-1.0) ** (n - v.k)
            zst = sys._star_stack[v]
            for row, v0 in enumerate(active):
                y = sys._phi_traj[v0]
                prod = np.zeros(m1, dtype=np.complex128)
                for a in range(b):
                    prod += math.comb(b - 1, a) * y[:, a] * zst.deriv(b - 1 - a)
                Gb[:, row, col] = sgn * sys._beta[v] * prod
        sys._G_d.append(Gb)

    # R_tilde derivative stack
    rho = wcol[:, None, :] / wcol[:, :, None]
    mu = lcot_col[:, None] - lcot_col[None, :]
    sys._R_d = []
    for i in range(depth + 1):
        acc = np.zeros_like(G0)
        for b in range(i + 1):
            a = i - b
            core = L @ sys._G_d[b] @ Rt
            acc += math.comb(i, a) * (mu ** a) * rho * core
        sys._R_d.append(acc)
    sys.R_tilde = sys._R_d[0]

    # psi_tilde derivative stack from the phi trajectories
    phi0_d = [np.stack([sys._phi_traj[v][:, b] for v in active], axis=1)
              for b in range(depth + 1)]
    winv = 1.0 / wcol
    sys._psi_tilde_d = []
    for nu in range(depth + 1):
        acc = np.zeros((m1, 2 * P), dtype=np.complex128)
        for a in range(nu + 1):
            acc += math.comb(nu, a) * (lcot_col ** a) * winv \
                * (phi0_d[nu - a] @ L.T)
        sys._psi_tilde_d.append(acc)
    sys.psi_tilde = sys._psi_tilde_d[0]
    return sys


def solve_main_equation(sys: MainEquationSystem) -> MainEquationSystem:
    """Solve (I - R(x)) psi(x) = psi_tilde(x) at every node, then the
    derivative systems sharing the same matrix."""
    P2 = 2 * len(sys.pairs)
    if P2 == 0:
        sys.psi = np.zeros((sys.grid_size + 1, 0), dtype=np.complex128)
        sys._psi_d = [sys.psi]
        sys.residual_max = 0.0
        return sys
    eye = np.eye(P2, dtype=np.complex128)
    A = eye[None, :, :] - sys.R_tilde
    sv = np.linalg.svd(A, compute_uv=False)
    ratio = sv[:, -1] / np.maximum(sv[:, 0], 1e-300)
    sys.sv_ratio_min = float(np.min(ratio))
    if sys.sv_ratio_min < SV_RATIO_FLOOR:
        node = int(np.argmin(ratio))
        raise SingularMainEquationError(
            "condition (S-5) fails: main equation not uniquely solvable "
            f"(singular-value ratio {sys.sv_ratio_min:.2e} at "
            f"x={node / sys.grid_size:.4g})"
        )
    depth = sys.n - 2
    sys._psi_d = []
    for nu in range(depth + 1):
        rhs = sys._psi_tilde_d[nu].copy()
        for i in range(1, nu + 1):
            rhs += math.comb(nu, i) * np.einsum(
                "xij,xj->xi", sys._R_d[i], sys._psi_d[nu - i])
        sys._psi_d.append(np.linalg.solve(A, rhs[:, :, None])[:, :, 0])
    sys.psi = sys._psi_d[0]
    res = np.einsum("xij,xj->xi", A, sys.psi) - sys.psi_tilde
    sys.residual_max = float(np.max(np.abs(res))) if res.size else 0.0
    return sys


def recover_phi(sys: MainEquationSystem,
                profile: Optional[PerturbationProfile] = None
                ) -> Dict[VIndex, DerivStack]:
    """Weyl-solution values phi_v of the unknown operator, with classical
    derivatives 0..n-2; inactive indices copy the model solutions."""
    if sys.psi is None:
        raise RuntimeError("solve_main_equation must run first")
    n, N = sys.n, sys.N
    depth = n - 2
    m1 = sys.grid_size + 1
    out: Dict[VIndex, DerivStack] = {}
    if sys.pairs:
        phis = []
        for nu in range(depth + 1):
            acc = np.zeros((m1, 2 * len(sys.pairs)), dtype=np.complex128)
            for a in range(nu + 1):
                acc += math.comb(nu, a) * ((-sys._lcot_col) ** a) * sys._wcol \
                    * (sys._psi_d[nu - a] @ sys._B.T)
            phis.append(acc)
        for v in sys.active:
            i = sys.slot(v)
            out[v] = DerivStack(np.stack([phis[nu][:, i]
                                          for nu in range(depth + 1)]))
    prof = profile if profile is not None else sys.profile
    for k in range(1, n):
        for l in range(1, N + 1):
            if prof.xi[l - 1] > 0.0:
                continue
            lam = complex(sys._model_data.get(l, k).lam)
            traj = weyl_solution(sys._c_model, k + 1, lam)
            stack = DerivStack(traj[:, :depth + 1].T.copy())
            out[VIndex(l, k, 0)] = stack
            out[VIndex(l, k, 1)] = stack
    return out


def build_eta(c_model: CoefficientSet, v: VIndex, data: SpectralDataSet,
              model_data: SpectralDataSet) -> DerivStack:
    """eta_v = (-1)^{n-k} beta_v Phi*_{n-k+1}(., lambda_v) with classical
    derivatives 0..n-2 (star quasi-derivatives inverted triangularly)."""
    n = c_model.n
    lam_v, beta_v = _datum_lam_beta(data, model_data, v)
    star = weyl_solution(c_model, n - v.k + 1, lam_v, star=True)
    pder = _p_deriv_table(c_model, max(0, n - 4))
    stack = _star_classical_stack(c_model, star, n - 2, pder)
    sgn = (-1.0) ** (n - v.k)
    return DerivStack(sgn * beta_v * stack.values)


def eta_map_for(sys: MainEquationSystem) -> Dict[VIndex, DerivStack]:
    """eta stacks for every index recover_phi reports."""
    n, N = sys.n, sys.N
    pder = _p_deriv_table(sys._c_model, max(0, n - 4))
    out: Dict[VIndex, DerivStack] = {}
    for v in sys.active:
        sgn = (-1.0) ** (n - v.k)
        out[v] = DerivStack(sgn * sys._beta[v] * sys._star_stack[v].values)
    for k in range(1, n):
        for l in range(1, N + 1):
            if sys.profile.xi[l - 1] > 0.0:
                continue
            d = sys._model_data.get(l, k)
            star = weyl_solution(sys._c_model, n - k + 1, complex(d.lam),
                                 star=True)
            stack = _star_classical_stack(sys._c_model, star, n - 2, pder)
            sgn = (-1.0) ** (n - k)
            es = DerivStack(sgn * complex(d.beta) * stack.values)
            out[VIndex(l, k, 0)] = es
            out[VIndex(l, k, 1)] = es
    return out


# ------------------------------------------------------------------ series

def series_T(phi_map: Dict[VIndex, DerivStack],
             eta_map: Dict[VIndex, DerivStack],
             j1: int, j2: int) -> GridFunction:
    """T_{j1,j2} = sum over (l,k) of phi^(j1) eta^(j2), eps-paired."""
    some = next(iter(phi_map.values()))
    depth = some.depth
    if j1 + j2 > depth:
        raise ValueError(
            f"T_({j1},{j2}) exceeds the direct range j1+j2 <= {depth}; "
            "the reconstruction reaches it through the telescoped "
            "derivative of the d-weighted combination instead")
    m1 = some.grid_size + 1
    acc = np.zeros(m1, dtype=np.complex128)
    for v in phi_map:
        if v.eps != 0:
            continue
        v1 = VIndex(v.l, v.k, 1)
        acc += phi_map[v].deriv(j1) * eta_map[v].deriv(j2)
        acc -= phi_map[v1].deriv(j1) * eta_map[v1].deriv(j2)
    return GridFunction(m1 - 1, acc, smoothness_tag=depth - j1 - j2)


def series_t(phi_map: Dict[VIndex, DerivStack],
             eta_map: Dict[VIndex, DerivStack],
             r: int, s: int) -> GridFunction:
    """t_{r,s} = sum_{u=s}^{r-1} C(r,u+1) C(u,s) T_{r-u-1,u-s}."""
    out = None
    for u in range(s, r):
        term = math.comb(r, u + 1) * math.comb(u, s) \
            * series_T(phi_map, eta_map, r - u - 1, u - s)
        out = term if out is None else out + term
    if out is None:
        raise ValueError(f"empty t_({r},{s}) sum")
    return out


def coeffs_b_d(n: int, s: int) -> Tuple[np.ndarray, np.ndarray]:
    """Integer tables b_j (j = 0..n-s-1) and d_j (j = 0..n-s-2) with
    d_j = sum_{i<=j} (-1)^{j-i} b_i; the closure d_{n-s-1} must vanish."""
    if not 0 <= s <= n - 2:
        raise ValueError(f"s must lie in 0..{n - 2}, got {s}")
    b = np.array([math.comb(n, j + s + 1) * math.comb(j + s, s)
                  for j in range(n - s)], dtype=object)
    b[n - s - 1] += (-1) ** (n - s)
    d = np.empty(n - s - 1, dtype=object)
    acc = 0
    for j in range(n - s - 1):
        acc = b[j] - acc
        d[j] = acc
    closure = b[n - s - 1] - (d[n - s - 2] if n - s - 2 >= 0 else 0)
    if closure != 0:
        raise RuntimeError(
            f"telescoping closure violated at n={n}, s={s}: {closure}")
    return b.astype(np.int64), d.astype(np.int64)


def s1_direct(phi_map: Dict[VIndex, DerivStack],
              eta_map: Dict[VIndex, DerivStack],
              n: int, s: int) -> GridFunction:
    """The head combination sum_j b_j T_{n-s-1-j,j} evaluated directly;
    defined for s >= 1 (s = 0 would need T outside the direct range)."""
    b, _ = coeffs_b_d(n, s)
    out = None
    for j in range(n - s):
        term = int(b[j]) * series_T(phi_map, eta_map, n - s - 1 - j, j)
        out = term if out is None else out + term
    return out


def _d_combination(phi_map, eta_map, n: int, s: int) -> GridFunction:
    _, d = coeffs_b_d(n, s)
    out = None
    for j in range(n - s - 1):
        term = int(d[j]) * series_T(phi_map, eta_map, n - s - 2 - j, j)
        out = term if out is None else out + term
    return out


def reconstruct(c_model: CoefficientSet,
                phi_map: Dict[VIndex, DerivStack],
                eta_map: Dict[VIndex, DerivStack]) -> CoefficientSet:
    """Reconstruction formulas, s descending from n-2 to 0.

    The head term S1 is taken as the numerical derivative of the
    d-weighted T combination (the telescoped form); the s = 0 step runs
    through the antiderivative instead and fixes the mean-zero gauge
    for sigma.
    """
    n = c_model.n
    grid_size = c_model.grid_size
    pder = _p_deriv_table(c_model, n - 2)
    p_new: Dict[int, GridFunction] = {}

    for s in range(n - 2, 0, -1):
        s1 = differentiate(_d_combination(phi_map, eta_map, n, s))
        total = c_model.p[s] - s1
        for j in range(0, n - s - 2):
            coef = np.zeros(grid_size + 1, dtype=np.complex128)
            for r in range(j, n - s - 2):
                coef += ((-1.0) ** r) * math.comb(r, j) * pder[(r + s + 1, r - j)]
            tj = series_T(phi_map, eta_map, 0, j)
            total = total + GridFunction(grid_size, coef * tj.values,
                                         smoothness_tag=tj.smoothness_tag)
        for r in range(s + 1, n - 1):
            trs = series_t(phi_map, eta_map, r, s)
            total = total - GridFunction(
                grid_size, p_new[r].values * trs.values,
                smoothness_tag=min(p_new[r].smoothness_tag,
                                   trs.smoothness_tag))
        p_new[s] = total

    # s = 0: sigma carries p_0; integrate the non-head terms once
    corr = -_d_combination(phi_map, eta_map, n, 0)
    inner = None
    for j in range(0, n - 2):
        coef = np.zeros(grid_size + 1, dtype=np.complex128)
        for r in range(j, n - 2):
            coef += ((-1.0) ** r) * math.comb(r, j) * pder[(r + 1, r - j)]
        tj = series_T(phi_map, eta_map, 0, j)
        term = GridFunction(grid_size, coef * tj.values,
                            smoothness_tag=tj.smoothness_tag)
        inner = term if inner is None else inner + term
    for r in range(1, n - 1):
        trs = series_t(phi_map, eta_map, r, 0)
        term = GridFunction(grid_size, -p_new[r].values * trs.values,
                            smoothness_tag=min(p_new[r].smoothness_tag,
                                               trs.smoothness_tag))
        inner = term if inner is None else inner + term
    if inner is not None:
        corr = corr + antiderivative(inner)
    sigma = c_model.sigma + corr
    sigma = GridFunction(grid_size, sigma.values - np.mean(sigma.values),
                         smoothness_tag=min(c_model.sigma.smoothness_tag,
                                            corr.smoothness_tag))
    return CoefficientSet(n, sigma, p_new)


# ------------------------------------------------------------------ drivers

@dataclass
class ReconstructionReport:
    """Everything an inversion run produces."""

    coefficients: CoefficientSet
    profile: PerturbationProfile
    system: Optional[MainEquationSystem]
    residual_max: float
    sv_ratio_min: float


def reconstruct_from_data(data: SpectralDataSet, c_model: CoefficientSet,
                          model_data: Optional[SpectralDataSet] = None
                          ) -> ReconstructionReport:
    """Full inversion: validate, assemble, solve, reconstruct."""
    validate_spectral_data(data)
    if model_data is None:
        model_data = compute_spectral_data(c_model, data.N)
    profile = perturbation_profile(data, model_data)
    if not np.any(profile.xi > 0.0):
        coeffs = CoefficientSet(
            c_model.n, c_model.sigma.copy(),
            {k: pk.copy() for k, pk in c_model.p.items()})
        return ReconstructionReport(coeffs, profile, None, 0.0, math.inf)
    sys = assemble_system(c_model, data, model_data)
    solve_main_equation(sys)
    phi_map = recover_phi(sys)
    eta_map = eta_map_for(sys)
    coeffs = reconstruct(c_model, phi_map, eta_map)
    return ReconstructionReport(coeffs, profile, sys,
                                sys.residual_max, sys.sv_ratio_min)


def recover_weyl_check(sys: MainEquationSystem, c_hat: CoefficientSet,
                       lam_test: complex, k0: int) -> Dict[str, float]:
    """Diagnostic: rebuild a Weyl solution at a generic lambda from the
    recovered phi values and compare with the forward solution of the
    reconstructed operator.

    Two index variants of the recovery sum are reported: the consistent
    one (left side k0 + 1, matching the system the phi satisfy) and the
    off-by-one one (left side k0).  Only the consistent variant is
    expected to vanish.
    """
    n = sys.n
    c_model = sys._c_model
    if not 1 <= k0 <= n - 1:
        raise ValueError(f"k0 must lie in 1..{n - 1}")
    phi_map = recover_phi(sys)
    base_cons = weyl_solution(c_model, k0 + 1, lam_test)
    corr = np.zeros(sys.grid_size + 1, dtype=np.complex128)
    for v in sys.active:
        sgn = (-1.0) ** (n - v.k)
        br = bracket_values(sys._star_stack[v]._quasi, base_cons)
        bv = sgn * sys._beta[v] * br / (lam_test - sys._lam[v])
        corr += (1 if v.eps == 0 else -1) * bv * phi_map[v].deriv(0)
    rec_cons = base_cons[:, 0] + corr
    ref_cons = weyl_solution(c_hat, k0 + 1, lam_test)[:, 0]
    rec_lit = weyl_solution(c_model, k0, lam_test)[:, 0] + corr
    ref_lit = weyl_solution(c_hat, k0, lam_test)[:, 0]

    def _rel(a, b):
        return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))

    return {
        "consistent_residual": _rel(rec_cons, ref_cons),
        "literal_residual": _rel(rec_lit, ref_lit),
    }
