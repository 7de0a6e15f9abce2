"""Command-line interface: seeded experiment sweeps that emit TSV tables.

Subcommands
-----------
``sweep``         error-versus-gamma curves for the random-feature pipeline
                  and its Gaussian surrogate (one TSV per depth/lambda)
``universality``  pipeline-versus-surrogate gap report at sizes n and 2n
``spectra``       covariance eigenvalue histograms + analytic densities
``cgmt``          scalar saddle-point predictions against Monte-Carlo fits

Each subcommand takes ``--config <path>`` (key=value lines) plus override
flags; flags win over the file.  The exit code is 0 only when every cell
converged.  ``DRFLAB_THREADS`` sets the worker count (default 1); results
do not depend on it.
"""

import argparse
import sys

from .experiments import (
    ConfigError,
    parse_config,
    run_cgmt_vs_mc,
    run_figure_sweep,
    run_spectra,
    run_universality_gap,
)

_DEFAULT_KINDS = {
    "sweep": "figure1_ridge",
    "universality": "universality_gap",
    "spectra": "figure3_spectra",
    "cgmt": "cgmt_vs_mc",
}

_OVERRIDE_FLAGS = [
    ("kind", "experiment kind (see config docs)"),
    ("n", "training-set size"),
    ("ratio", "n/d ratio (d = round(n/ratio))"),
    ("gamma_grid", "comma-separated p/n values, strictly increasing"),
    ("depths", "comma-separated pipeline depths"),
    ("activation", "tanh | erf | linear"),
    ("lambda_grid", "comma-separated regularization strengths"),
    ("lambda2", "quadratic weight for elastic net"),
    ("sigma_nu", "label noise standard deviation"),
    ("theta_scale", "teacher norm (0 turns the signal off)"),
    ("seeds", "Monte-Carlo repetitions per cell"),
    ("output", "output directory for TSV files"),
    ("master_seed", "root of the deterministic seed tree"),
    ("order", "Gauss-Hermite quadrature order"),
    ("test_factor", "test-set size as a multiple of n"),
    ("cgmt_draws", "direction redraws averaged per saddle-point row"),
    ("p0", "input width for spectra"),
    ("p2", "output width for depth-2 spectra"),
    ("p1_grid", "comma-separated hidden widths for spectra"),
    ("bins", "histogram bin count"),
    ("omega", "spectral smearing width"),
    ("rho1", "override every layer's linear coefficient (spectra only)"),
    ("rho2", "override every layer's noise coefficient (spectra only)"),
]

_RUNNERS = {
    "sweep": run_figure_sweep,
    "universality": run_universality_gap,
    "spectra": run_spectra,
    "cgmt": run_cgmt_vs_mc,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="drflab",
        description="Deep random-feature regression laboratory: seeded "
                    "experiment sweeps emitting TSV tables.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sweep": "error-versus-gamma sweep (pipeline, surrogate, and "
                 "saddle-point columns)",
        "universality": "train/test gap between pipeline and surrogate at "
                        "two sizes",
        "spectra": "empirical vs analytic covariance spectra",
        "cgmt": "saddle-point predictions vs Monte-Carlo fits",
    }
    for name in _DEFAULT_KINDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", default=None,
                        help="key=value config file (flags override it)")
        for key, help_text in _OVERRIDE_FLAGS:
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key,
                            default=None, help=help_text)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    overrides = {key: getattr(args, key) for key, _ in _OVERRIDE_FLAGS
                 if getattr(args, key) is not None}
    overrides.setdefault("kind", _DEFAULT_KINDS[args.command])
    try:
        config = parse_config(args.config, overrides)
        outcome = _RUNNERS[args.command](config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2
    for path in outcome.paths:
        print(f"wrote {path}")
    if outcome.failed:
        print(f"failed cells: {outcome.failed}", file=sys.stderr)
        return 1
    print("all cells converged")
    return 0


if __name__ == "__main__":
    sys.exit(main())
