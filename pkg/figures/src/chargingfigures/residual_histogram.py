"""Histogram of constraint-surrogate residuals, window slots pooled.

The residual CSV carries one column per window slot; the histogram
summarizes the pooled values, which are returned verbatim for checks.
"""

import argparse
import sys

import matplotlib.pyplot as plt

from .schema import SchemaError, pooled_values
from .style import apply_style, save_svg


def render(input_path, output_path, bins=60):
    values = pooled_values(input_path)
    apply_style()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    counts, edges, _ = ax.hist(values, bins=bins, color="tab:blue")
    ax.set_xlabel("residual (V)")
    ax.set_ylabel("count")
    fig.tight_layout()
    save_svg(fig, output_path)
    return {
        "values": values,
        "counts": [float(c) for c in counts],
        "edges": [float(e) for e in edges],
    }


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot-residual-histogram",
        description="Histogram of surrogate residuals from a residual CSV.",
    )
    parser.add_argument("--input", required=True,
                        help="residual CSV, e.g. residuals_g_test.csv")
    parser.add_argument("--output", required=True, help="destination SVG path")
    parser.add_argument("--bins", type=int, default=60)
    args = parser.parse_args(argv)
    try:
        render(args.input, args.output, bins=args.bins)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
