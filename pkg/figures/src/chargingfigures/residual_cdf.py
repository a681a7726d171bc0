"""Empirical CDFs of train vs test constraint-surrogate residuals."""

import argparse
import sys

import matplotlib.pyplot as plt
import numpy as np

from .schema import SchemaError, pooled_values
from .style import apply_style, save_svg


def _empirical_cdf(values):
    x = np.sort(values)
    y = np.arange(1, x.size + 1) / x.size
    return x, y


def render(train_path, test_path, output_path):
    pools = {
        "train": pooled_values(train_path),
        "test": pooled_values(test_path),
    }
    apply_style()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    series = {}
    for label, color in (("train", "tab:blue"), ("test", "tab:red")):
        x, y = _empirical_cdf(pools[label])
        line, = ax.step(x, y, where="post", color=color, label=label)
        series[f"{label}_x"] = np.asarray(line.get_xdata(), dtype=float)
        series[f"{label}_y"] = np.asarray(line.get_ydata(), dtype=float)
    ax.set_xlabel("residual (V)")
    ax.set_ylabel("empirical CDF")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right")
    fig.tight_layout()
    save_svg(fig, output_path)
    return series


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot-residual-cdf",
        description="Empirical CDFs of train vs test surrogate residuals.",
    )
    parser.add_argument("--train", required=True, help="training residual CSV")
    parser.add_argument("--test", required=True, help="held-out residual CSV")
    parser.add_argument("--output", required=True, help="destination SVG path")
    args = parser.parse_args(argv)
    try:
        render(args.train, args.test, args.output)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
