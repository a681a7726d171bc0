"""Render every figure from one experiment output directory."""

import argparse
import sys
from pathlib import Path

from . import explained_variance, residual_cdf, residual_histogram, trajectory_panel
from .schema import SchemaError
from .trajectory_panel import VARIANTS


def render_all(run_dir, out_dir, bins=60):
    run_dir, out_dir = Path(run_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    explained_variance.render(
        run_dir / "explained_variance.csv", out_dir / "explained_variance.svg")
    written.append(out_dir / "explained_variance.svg")

    residual_histogram.render(
        run_dir / "residuals_g_test.csv", out_dir / "residual_histogram.svg", bins=bins)
    written.append(out_dir / "residual_histogram.svg")

    residual_cdf.render(
        run_dir / "residuals_g_train.csv", run_dir / "residuals_g_test.csv",
        out_dir / "residual_cdf.svg")
    written.append(out_dir / "residual_cdf.svg")

    trajectory_panel.render(
        {v: run_dir / "control" / v / "run_000.csv" for v in VARIANTS},
        run_dir / "certificate.json", out_dir / "trajectory_panel.svg")
    written.append(out_dir / "trajectory_panel.svg")

    return written


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="make-all-figures",
        description="Render all four figures from an experiment output directory.",
    )
    parser.add_argument("--run", required=True, help="experiment output directory")
    parser.add_argument("--out", required=True, help="directory for the SVG files")
    parser.add_argument("--bins", type=int, default=60, help="histogram bin count")
    args = parser.parse_args(argv)
    try:
        written = render_all(args.run, args.out, bins=args.bins)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
