"""Sweep the overparameterization ratio and watch the error curves.

Runs a small error-versus-gamma sweep for depth-1 and depth-2 pipelines
at weak ridge regularization, where the interpolation peak around
gamma = 1 is clearly visible, then prints the test-error curves next to
the scalar saddle-point predictions.

Run:  python3 demos/double_descent_sweep.py  (about a minute)
"""

import os
import tempfile

from drflab import parse_config, run_figure_sweep


def read_rows(path):
    rows = []
    with open(path) as fh:
        header = None
        for line in fh:
            if line.startswith("#"):
                continue
            parts = line.strip().split("\t")
            if header is None:
                header = parts
            else:
                rows.append(dict(zip(header, parts)))
    return rows


def main():
    out = os.path.join(tempfile.gettempdir(), "drflab_demo_sweep")
    config = parse_config(overrides={
        "kind": "figure1_ridge",
        "n": "120",
        "seeds": "8",
        "gamma_grid": "0.4,0.7,0.9,1.0,1.1,1.4,2.0,3.0",
        "lambda_grid": "1e-4",
        "depths": "1,2",
        "cgmt_draws": "2",
        "output": out,
    })
    outcome = run_figure_sweep(config)
    print(f"{len(outcome.paths)} tables written to {out}; "
          f"{outcome.failed} failed cells\n")
    for path in outcome.paths:
        depth = "depth 1" if "_L1_" in path else "depth 2"
        print(f"{depth}  (test error: pipeline | surrogate | saddle-point)")
        for row in read_rows(path):
            print(f"  gamma={float(row['gamma']):4.1f}   "
                  f"{float(row['TestActivation']):.4f} | "
                  f"{float(row['TestGaussian']):.4f} | "
                  f"{float(row['TestCGMT']):.4f}")
        print()
    print("The peak near gamma = 1 is the interpolation threshold; past it,")
    print("adding features brings the test error back down, and the three")
    print("columns track each other at every ratio.")


if __name__ == "__main__":
    main()
