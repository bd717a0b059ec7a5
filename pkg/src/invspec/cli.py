"""Command-line interface.

Exit codes: 0 success, 1 numerical failure, 2 validation failure of the
input spectral data.
"""

from __future__ import annotations

import argparse
import sys

from .forward import ForwardError, SpectralDataError
from .harness import (
    ExperimentConfig,
    PerturbationSpec,
    cmd_forward,
    cmd_invert,
    cmd_roundtrip,
    cmd_stability_sweep,
)
from .inverse import SingularMainEquationError

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_VALIDATION = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--order", type=int, required=True,
                   help="differential order n (>= 2)")
    p.add_argument("--grid-size", type=int, default=2000,
                   help="number of grid intervals on [0, 1]")
    p.add_argument("--num-eigenvalues", type=int, default=5,
                   help="eigenvalues per boundary-value problem")
    p.add_argument("--model", default="zero",
                   help="preset name (zero | smooth-poly | rough-sigma) "
                        "or a coefficient CSV path")
    p.add_argument("--perturb", type=float, default=0.0,
                   help="relative perturbation magnitude for the lowest "
                        "eigenvalue indices")
    p.add_argument("--perturb-lmax", type=int, default=3,
                   help="perturb entries with l up to this index")
    p.add_argument("--phase", type=float, default=0.0,
                   help="phase of the complex perturbation factor")
    p.add_argument("--scales", default="1e-4,2e-4,4e-4,8e-4",
                   help="comma-separated omega targets for the sweep")
    p.add_argument("--tol", type=float, default=1e-9,
                   help="solver tolerance recorded in reports")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for perturbation draws")


def _config(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        n=args.order,
        grid_size=args.grid_size,
        N=args.num_eigenvalues,
        model=args.model,
        perturbation=PerturbationSpec(
            magnitude=args.perturb, l_max=args.perturb_lmax,
            phase=args.phase, seed=args.seed),
        scales=tuple(float(s) for s in args.scales.split(",") if s),
        tol=args.tol,
        out_dir=args.out,
        seed=args.seed,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="invspec",
        description="spectral data and coefficient reconstruction for "
                    "higher-order operators with distribution potentials")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fwd = sub.add_parser("forward", help="compute spectral data")
    _add_common(p_fwd)

    p_inv = sub.add_parser("invert", help="reconstruct coefficients")
    p_inv.add_argument("data", help="spectral-data JSON file")
    _add_common(p_inv)

    p_rt = sub.add_parser("roundtrip",
                          help="forward, perturb, invert, compare")
    _add_common(p_rt)

    p_sw = sub.add_parser("stability-sweep",
                          help="error norms across perturbation scales")
    _add_common(p_sw)

    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "forward":
            path = cmd_forward(cfg)
            print(f"spectral data written to {path}")
        elif args.command == "invert":
            path = cmd_invert(args.data, cfg)
            print(f"coefficients written to {path}")
        elif args.command == "roundtrip":
            disc = cmd_roundtrip(cfg)
            print(f"max relative spectral discrepancy: {disc:.6e}")
        else:
            rep = cmd_stability_sweep(cfg)
            slopes = ", ".join(
                f"k={k}: {v:.3f}" for k, v in sorted(rep.slope.items()))
            print(f"stability slopes: {slopes or 'not fitted'}")
    except SpectralDataError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ForwardError, SingularMainEquationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
