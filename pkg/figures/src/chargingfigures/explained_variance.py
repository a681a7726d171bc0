"""Per-component explained variance bars with the cumulative curve."""

import argparse
import sys

import matplotlib.pyplot as plt

from .schema import SchemaError, read_columns
from .style import apply_style, save_svg


def render(input_path, output_path):
    """Draw the variance table and return the series exactly as plotted."""
    cols = read_columns(input_path, required=("component", "variance_ratio", "cumulative"))
    apply_style()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    bars = ax.bar(cols["component"], cols["variance_ratio"], width=0.8,
                  color="tab:blue", label="individual")
    line, = ax.plot(cols["component"], cols["cumulative"], color="tab:red",
                    marker=".", label="cumulative")
    ax.set_xlabel("principal component")
    ax.set_ylabel("explained variance ratio")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="center right")
    fig.tight_layout()
    save_svg(fig, output_path)
    return {
        "component": [float(v) for v in line.get_xdata()],
        "individual": [float(b.get_height()) for b in bars],
        "cumulative": [float(v) for v in line.get_ydata()],
    }


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot-explained-variance",
        description="Bar chart of per-component explained variance with the cumulative curve.",
    )
    parser.add_argument("--input", required=True,
                        help="explained_variance.csv from the experiment output")
    parser.add_argument("--output", required=True, help="destination SVG path")
    args = parser.parse_args(argv)
    try:
        render(args.input, args.output)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
