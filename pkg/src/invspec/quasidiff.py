"""Quasi-derivative machinery for n-th order operators with rough coefficients.

The operator y^(n) + sum_{k=0}^{n-2} p_k y^(k) with p_0 = sigma' is
regularized through an associated matrix F(x) whose entries involve only
sigma and p_1..p_{n-2}.  Quasi-derivatives are defined recursively by

    y^[0] = y,   y^[k] = (y^[k-1])' - sum_{j<=k} f_{k,j} y^[j-1],

and the equation becomes the first-order system Y' = (F + J + lambda E) Y
where J is the shift with ones on the superdiagonal and E closes the
system through the bottom-left corner.  The adjoint-side system uses the
mirrored matrix F* with alternating signs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .funcspace import GridFunction


@dataclass
class CoefficientSet:
    """Coefficients of one operator: sigma (antiderivative of p_0) and p_1..p_{n-2}.

    p_0 itself is never materialized; sigma carries it.  p[k] must be
    declared with smoothness_tag >= k - 1 so the reconstruction formulas
    can take the derivatives they need.
    """

    n: int
    sigma: GridFunction
    p: Dict[int, GridFunction] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("operator order n must be >= 2")
        expected = set(range(1, self.n - 1))
        if set(self.p.keys()) != expected:
            raise ValueError(f"p must have exactly the keys {sorted(expected)}")
        for k, pk in self.p.items():
            if pk.grid_size != self.sigma.grid_size:
                raise ValueError("all coefficients must share one grid")
            if pk.smoothness_tag < k - 1:
                raise ValueError(
                    f"p[{k}] needs smoothness_tag >= {k - 1}, got {pk.smoothness_tag}"
                )

    @property
    def grid_size(self) -> int:
        return self.sigma.grid_size


def zero_coefficients(n: int, grid_size: int) -> CoefficientSet:
    """The zero operator y^(n) of order n on the given grid."""
    sigma = GridFunction.zeros(grid_size, smoothness_tag=0)
    p = {k: GridFunction.zeros(grid_size, smoothness_tag=k - 1)
         for k in range(1, n - 1)}
    return CoefficientSet(n, sigma, p)


@dataclass
class AssociatedMatrix:
    """Sparse matrix of grid functions defining the quasi-derivatives.

    entries maps 1-indexed (row, col) to a GridFunction; absent entries
    are zero.  star_flag marks the adjoint-side mirror.
    """

    n: int
    entries: Dict[Tuple[int, int], GridFunction]
    star_flag: bool = False

    def __post_init__(self):
        for (r, c), g in self.entries.items():
            if not (1 <= r <= self.n and 1 <= c <= self.n):
                raise ValueError(f"entry index ({r},{c}) outside 1..{self.n}")
        sizes = {g.grid_size for g in self.entries.values()}
        if len(sizes) > 1:
            raise ValueError("entries must share one grid")

    @property
    def grid_size(self) -> int:
        for g in self.entries.values():
            return g.grid_size
        raise ValueError("empty associated matrix has no grid")


def build_F(c: CoefficientSet) -> AssociatedMatrix:
    """Associated matrix of the direct system.

    For n >= 3 the nonzero entries are f_{n-1,1} = -sigma,
    f_{n,2} = sigma - p_1 and f_{n,k} = -p_{k-1} for k = 3..n-1.
    For n = 2 the matrix is [[-sigma, 0], [-sigma^2, sigma]].
    """
    n = c.n
    entries: Dict[Tuple[int, int], GridFunction] = {}
    if n == 2:
        entries[(1, 1)] = -c.sigma
        entries[(2, 1)] = -(c.sigma * c.sigma)
        entries[(2, 2)] = c.sigma.copy()
    else:
        entries[(n - 1, 1)] = -c.sigma
        entries[(n, 2)] = c.sigma - c.p[1]
        for k in range(3, n):
            entries[(n, k)] = -c.p[k - 1]
    return AssociatedMatrix(n, entries, star_flag=False)


def build_Fstar(F: AssociatedMatrix) -> AssociatedMatrix:
    """Mirror of F with alternating signs: f*_{k,j} = (-1)^{k+j+1} f_{n-j+1,n-k+1}."""
    if F.star_flag:
        raise ValueError("build_Fstar expects a non-star associated matrix")
    entries = _mirror_entries(F.n, F.entries)
    return AssociatedMatrix(F.n, entries, star_flag=True)


def _mirror_entries(n: int, entries: Dict[Tuple[int, int], GridFunction]
                    ) -> Dict[Tuple[int, int], GridFunction]:
    out: Dict[Tuple[int, int], GridFunction] = {}
    for (r, c), g in entries.items():
        k, j = n - c + 1, n - r + 1
        sign = -1.0 if (k + j) % 2 == 0 else 1.0
        out[(k, j)] = sign * g
    return out


def system_matrix(A: AssociatedMatrix, lam: complex, x_index: int) -> np.ndarray:
    """Dense n x n matrix of the first-order system at grid node x_index.

    Row i gets a one in column i+1 (the shift part), the associated
    matrix adds its entries, and lambda (times (-1)^n on the star side)
    closes the system in the bottom-left corner.
    """
    n = A.n
    out = np.zeros((n, n), dtype=np.complex128)
    for i in range(n - 1):
        out[i, i + 1] = 1.0
    for (r, c), g in A.entries.items():
        out[r - 1, c - 1] += g.values[x_index]
    out[n - 1, 0] += closing_coefficient(n, A.star_flag) * lam
    return out


def closing_coefficient(n: int, star_flag: bool) -> float:
    """Coefficient of lambda in the bottom-left corner of the system matrix."""
    return float((-1) ** n) if star_flag else 1.0


def system_matrix_nodes(A: AssociatedMatrix) -> np.ndarray:
    """All node matrices of the lambda-free part, shape (M+1, n, n)."""
    n = A.n
    m1 = A.grid_size + 1
    out = np.zeros((m1, n, n), dtype=np.complex128)
    for i in range(n - 1):
        out[:, i, i + 1] = 1.0
    for (r, c), g in A.entries.items():
        out[:, r - 1, c - 1] += g.values
    return out


def closing_matrix(n: int, star_flag: bool) -> np.ndarray:
    """Matrix multiplying lambda in the system: single bottom-left entry."""
    out = np.zeros((n, n), dtype=np.complex128)
    out[n - 1, 0] = closing_coefficient(n, star_flag)
    return out


@dataclass
class QuasiState:
    """Vector of quasi-derivatives (y^[0], ..., y^[n-1]) at one point."""

    components: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=np.complex128)
        if self.components.ndim != 1:
            raise ValueError("components must be a vector")

    @property
    def n(self) -> int:
        return self.components.shape[0]


def lagrange_bracket(z, y) -> complex:
    """Lagrange bracket <z, y> = sum_k (-1)^k z^[k] y^[n-k-1].

    z carries star quasi-derivatives, y direct ones.  Accepts QuasiState
    or plain vectors.
    """
    zc = z.components if isinstance(z, QuasiState) else np.asarray(z)
    yc = y.components if isinstance(y, QuasiState) else np.asarray(y)
    if zc.shape != yc.shape:
        raise ValueError("state dimensions differ")
    n = zc.shape[-1]
    signs = (-1.0) ** np.arange(n)
    return complex(np.sum(signs * zc * yc[..., ::-1], axis=-1))


def bracket_values(ztraj: np.ndarray, ytraj: np.ndarray) -> np.ndarray:
    """Pointwise Lagrange bracket along trajectories of shape (nodes, n)."""
    if ztraj.shape != ytraj.shape:
        raise ValueError("trajectory shapes differ")
    n = ztraj.shape[-1]
    signs = (-1.0) ** np.arange(n)
    return np.sum(signs * ztraj * ytraj[..., ::-1], axis=-1)
