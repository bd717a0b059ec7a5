"""Spectral analysis of higher-order differential operators on the unit
interval with distributional zero-order coefficient.

The forward direction computes eigenvalues and weight numbers of the
boundary-value problems attached to an operator of order n; the inverse
direction reconstructs the coefficients from that spectral data by
solving a linear main equation in a weighted sequence space.
"""

from .funcspace import (
    DEFAULT_GRID_SIZE,
    GridFunction,
    SmoothnessError,
    antiderivative,
    differentiate,
    integrate,
    sobolev_norm,
)
from .quasidiff import (
    AssociatedMatrix,
    CoefficientSet,
    build_F,
    build_Fstar,
    lagrange_bracket,
    zero_coefficients,
)
from .forward import (
    AsymptoticsReport,
    EigenvalueEnumerationError,
    ForwardError,
    RootSearchError,
    SolverAccuracyError,
    SolverOverflowError,
    SpectralDataError,
    SpectralDataSet,
    SpectralDatum,
    WeylPoleError,
    WeylYurkoMatrix,
    asymptotics_report,
    compute_spectral_data,
    delta,
    find_eigenvalues,
    integrate_fundamental,
    validate_spectral_data,
    weight_numbers,
    weyl_matrix,
    weyl_solution,
)
from .inverse import (
    DerivStack,
    MainEquationSystem,
    PerturbationProfile,
    ReconstructionReport,
    SingularMainEquationError,
    VIndex,
    assemble_system,
    build_G,
    build_eta,
    coeffs_b_d,
    eta_map_for,
    perturbation_profile,
    reconstruct,
    reconstruct_from_data,
    recover_phi,
    recover_weyl_check,
    s1_direct,
    series_T,
    series_t,
    solve_main_equation,
    weight_w,
)
from .presets import PRESET_NAMES, make_preset
from .harness import (
    ExperimentConfig,
    PerturbationSpec,
    StabilityReport,
    StabilityRow,
    apply_perturbation,
    cmd_forward,
    cmd_invert,
    cmd_roundtrip,
    cmd_stability_sweep,
    coefficient_errors,
    load_coefficients,
    load_model,
    load_spectral_data,
    save_coefficients,
    save_spectral_data,
    spectral_discrepancy,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GRID_SIZE",
    "GridFunction",
    "SmoothnessError",
    "antiderivative",
    "differentiate",
    "integrate",
    "sobolev_norm",
    "AssociatedMatrix",
    "CoefficientSet",
    "build_F",
    "build_Fstar",
    "lagrange_bracket",
    "zero_coefficients",
    "AsymptoticsReport",
    "EigenvalueEnumerationError",
    "ForwardError",
    "RootSearchError",
    "SolverAccuracyError",
    "SolverOverflowError",
    "SpectralDataError",
    "SpectralDataSet",
    "SpectralDatum",
    "WeylPoleError",
    "WeylYurkoMatrix",
    "asymptotics_report",
    "compute_spectral_data",
    "delta",
    "find_eigenvalues",
    "integrate_fundamental",
    "validate_spectral_data",
    "weight_numbers",
    "weyl_matrix",
    "weyl_solution",
    "DerivStack",
    "MainEquationSystem",
    "PerturbationProfile",
    "ReconstructionReport",
    "SingularMainEquationError",
    "VIndex",
    "assemble_system",
    "build_G",
    "build_eta",
    "coeffs_b_d",
    "eta_map_for",
    "perturbation_profile",
    "reconstruct",
    "reconstruct_from_data",
    "recover_phi",
    "recover_weyl_check",
    "s1_direct",
    "series_T",
    "series_t",
    "solve_main_equation",
    "weight_w",
    "PRESET_NAMES",
    "make_preset",
    "ExperimentConfig",
    "PerturbationSpec",
    "StabilityReport",
    "StabilityRow",
    "apply_perturbation",
    "cmd_forward",
    "cmd_invert",
    "cmd_roundtrip",
    "cmd_stability_sweep",
    "coefficient_errors",
    "load_coefficients",
    "load_model",
    "load_spectral_data",
    "save_coefficients",
    "save_spectral_data",
    "spectral_discrepancy",
    "__version__",
]
