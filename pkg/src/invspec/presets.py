"""Named model coefficient sets used by the CLI and the test harness.

All presets keep sigma mean-zero.  The antiderivative gauge is fixed that
way throughout the package: reconstruction returns a mean-zero sigma, so
a preset with a nonzero mean could never be a fixed point of a zero
perturbation even though it generates the same operator.
"""

from __future__ import annotations

import numpy as np

from .funcspace import GridFunction, integrate
from .quasidiff import CoefficientSet, zero_coefficients

PRESET_NAMES = ("zero", "smooth-poly", "rough-sigma")


def _smooth_poly(n: int, grid_size: int) -> CoefficientSet:
    # low-degree polynomials, unit-scale, sigma shifted to mean zero
    sigma = GridFunction.from_callable(
        lambda x: 0.5 * x * (1.0 - x) * (2.0 - x) - 0.125, grid_size,
        smoothness_tag=6)
    sigma = sigma - integrate(sigma)
    p = {}
    for k in range(1, n - 1):
        amp = 0.4 / k
        p[k] = GridFunction.from_callable(
            lambda x, a=amp, m=k: a * (x ** m) * (1.0 - x) + 0.05 * a,
            grid_size, smoothness_tag=6)
    return CoefficientSet(n, sigma, p)


def _rough_sigma(n: int, grid_size: int) -> CoefficientSet:
    # zigzag with kinks at j/10: sigma is W_2^1 but not C^1, so p_0 is a
    # genuine distribution with jumps in its antiderivative's slope
    def zig(x):
        t = np.asarray(x) * 10.0
        frac = t - np.floor(t)
        tri = 1.0 - 2.0 * np.abs(frac - 0.5)
        return 0.3 * (tri - 0.5)

    sigma = GridFunction.from_callable(zig, grid_size, smoothness_tag=1)
    sigma = sigma - integrate(sigma)
    p = {k: GridFunction.zeros(grid_size, smoothness_tag=6)
         for k in range(1, n - 1)}
    return CoefficientSet(n, sigma, p)


def make_preset(name: str, n: int, grid_size: int) -> CoefficientSet:
    """Coefficient set for one of the named presets."""
    if name == "zero":
        return zero_coefficients(n, grid_size)
    if name == "smooth-poly":
        return _smooth_poly(n, grid_size)
    if name == "rough-sigma":
        return _rough_sigma(n, grid_size)
    raise ValueError(
        f"unknown preset {name!r}; choose one of {', '.join(PRESET_NAMES)}")
