"""Grid representation of functions on [0, 1] and basic calculus on them.

Functions live on a uniform grid with ``grid_size`` subintervals
(``grid_size + 1`` nodes).  Integration is composite trapezoid,
differentiation is second-order central differencing, and the
antiderivative is cumulative trapezoid.  Negative Sobolev norms are
computed through the mean-zero antiderivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

DEFAULT_GRID_SIZE = 2000


class SmoothnessError(ValueError):
    """Raised when an operation needs more smoothness than is declared."""


@dataclass
class GridFunction:
    """A complex-valued function sampled at x_i = i / grid_size.

    Attributes:
        grid_size: number of subintervals M; the grid has M + 1 nodes.
        values: complex array of length M + 1.
        smoothness_tag: declared Sobolev regularity order.  Tag -1 marks
            a distribution that is only materialized through its
            antiderivative; tag 0 is a plain L2 function; tag k >= 1
            permits k numerical derivatives.
    """

    grid_size: int
    values: np.ndarray
    smoothness_tag: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")
        if self.values.shape != (self.grid_size + 1,):
            raise ValueError(
                "values must have grid_size + 1 entries, got shape "
                f"{self.values.shape} for grid_size {self.grid_size}"
            )
        if self.smoothness_tag < -1:
            raise ValueError("smoothness_tag must be >= -1")

    @property
    def h(self) -> float:
        return 1.0 / self.grid_size

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_size + 1)

    @classmethod
    def from_callable(cls, f, grid_size: int = DEFAULT_GRID_SIZE,
                      smoothness_tag: int = 0) -> "GridFunction":
        x = np.linspace(0.0, 1.0, grid_size + 1)
        return cls(grid_size, np.asarray(f(x), dtype=np.complex128) * np.ones_like(x),
                   smoothness_tag)

    @classmethod
    def zeros(cls, grid_size: int = DEFAULT_GRID_SIZE,
              smoothness_tag: int = 0) -> "GridFunction":
        return cls(grid_size, np.zeros(grid_size + 1), smoothness_tag)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid_size, self.values.copy(), self.smoothness_tag)

    def _check_compatible(self, other: "GridFunction"):
        if self.grid_size != other.grid_size:
            raise ValueError("grid sizes differ: "
                             f"{self.grid_size} vs {other.grid_size}")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return GridFunction(self.grid_size, self.values + other.values,
                                min(self.smoothness_tag, other.smoothness_tag))
        return GridFunction(self.grid_size, self.values + other, self.smoothness_tag)

    __radd__ = __add__

    def __neg__(self):
        return GridFunction(self.grid_size, -self.values, self.smoothness_tag)

    def __sub__(self, other):
        return self.__add__(-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return GridFunction(self.grid_size, self.values * other.values,
                                min(self.smoothness_tag, other.smoothness_tag))
        return GridFunction(self.grid_size, self.values * other, self.smoothness_tag)

    __rmul__ = __mul__


def integrate(f: GridFunction) -> complex:
    """Composite-trapezoid integral of f over [0, 1]."""
    return complex(np.trapezoid(f.values, dx=f.h))


def differentiate(f: GridFunction) -> GridFunction:
    """Second-order finite-difference derivative.

    Requires smoothness_tag >= 1; lower tags have no pointwise
    derivative in this representation.
    """
    if f.smoothness_tag < 1:
        raise SmoothnessError(
            "non-differentiable representation "
            f"(smoothness_tag={f.smoothness_tag})"
        )
    d = np.gradient(f.values, f.h, edge_order=2)
    return GridFunction(f.grid_size, d, f.smoothness_tag - 1)


def antiderivative(f: GridFunction, mean_zero: bool = False) -> GridFunction:
    """Cumulative-trapezoid antiderivative vanishing at 0.

    With mean_zero=True the integration constant is chosen so the
    result has zero trapezoid mean.
    """
    vals = cumulative_trapezoid(f.values, dx=f.h, initial=0.0)
    if mean_zero:
        vals = vals - np.trapezoid(vals, dx=f.h)
    return GridFunction(f.grid_size, vals, f.smoothness_tag + 1)


def sobolev_norm(f: GridFunction, order: int = 0) -> float:
    """Sobolev norm of f.

    order 0 is the L2 norm; order k >= 1 is (sum_{j<=k} ||f^(j)||^2)^(1/2)
    computed with numerical derivatives; order -1 is the L2 norm of the
    mean-zero antiderivative.
    """
    if order < -1:
        raise ValueError("order must be >= -1")
    if order == -1:
        return sobolev_norm(antiderivative(f, mean_zero=True), 0)
    if order > max(f.smoothness_tag, 0):
        raise SmoothnessError(
            f"norm of order {order} needs smoothness_tag >= {order}, "
            f"got {f.smoothness_tag}"
        )
    total = 0.0
    g = f
    for j in range(order + 1):
        if j > 0:
            g = differentiate(g)
        total += float(np.trapezoid(np.abs(g.values) ** 2, dx=f.h).real)
    return float(np.sqrt(total))
