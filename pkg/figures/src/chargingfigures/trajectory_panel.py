"""Closed-loop trajectory panel: SOC, current, and safety margin per variant.

Overlays the three charging variants from their per-step run CSVs, adds
the nominal margin = 0 line and the robust offset line, and marks each
variant's charge-completion time (from the run's JSON summary, which
sits next to the CSV).
"""

import argparse
import sys
from pathlib import Path

import matplotlib.pyplot as plt

from .schema import SchemaError, read_columns, read_json_file
from .style import VARIANT_COLORS, apply_style, save_svg

VARIANTS = ("cccv", "nonrobust", "robust")
_ROWS = (("soc", "SOC"), ("current", "current (C-rate)"), ("eta_s", "margin (V)"))


def render(run_paths, certificate_path, output_path):
    """run_paths maps variant name to its run CSV; returns plotted series."""
    runs = {}
    for variant in VARIANTS:
        path = Path(run_paths[variant])
        cols = read_columns(path, required=("time", "current", "soc", "eta_s"))
        meta = read_json_file(path.with_suffix(".json"), required=("charge_time_min",))
        runs[variant] = (cols, meta)
    offset = float(read_json_file(certificate_path, required=("offset",))["offset"])

    apply_style()
    fig, axes = plt.subplots(3, 1, figsize=(6.0, 6.5), sharex=True)
    series = {"offset": offset}
    for variant in VARIANTS:
        cols, meta = runs[variant]
        color = VARIANT_COLORS[variant]
        entry = {}
        for ax, (key, _) in zip(axes, _ROWS):
            line, = ax.plot(cols["time"] / 60.0, cols[key], color=color,
                            label=variant if key == "soc" else None)
            entry["time_min"] = [float(v) for v in line.get_xdata()]
            entry[key] = [float(v) for v in line.get_ydata()]
        done = meta["charge_time_min"]
        entry["charge_time_min"] = done
        if done is not None:
            for ax in axes:
                ax.axvline(float(done), color=color, linestyle=":", linewidth=0.9)
        series[variant] = entry

    axes[2].axhline(0.0, color="black", linestyle="--", linewidth=1.0,
                    label="nominal limit")
    axes[2].axhline(offset, color=VARIANT_COLORS["robust"], linestyle="-.",
                    linewidth=1.0, label="robust offset")
    for ax, (_, ylabel) in zip(axes, _ROWS):
        ax.set_ylabel(ylabel)
    axes[0].legend(loc="lower right")
    axes[2].legend(loc="upper right")
    axes[2].set_xlabel("time (min)")
    fig.tight_layout()
    save_svg(fig, output_path)
    return series


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plot-trajectory-panel",
        description="SOC / current / safety-margin panel overlaying the three variants.",
    )
    parser.add_argument("--cccv", required=True, help="CCCV run CSV")
    parser.add_argument("--nonrobust", required=True, help="non-robust run CSV")
    parser.add_argument("--robust", required=True, help="robust run CSV")
    parser.add_argument("--certificate", required=True,
                        help="certificate.json providing the robust offset")
    parser.add_argument("--output", required=True, help="destination SVG path")
    args = parser.parse_args(argv)
    try:
        render(
            {"cccv": args.cccv, "nonrobust": args.nonrobust, "robust": args.robust},
            args.certificate,
            args.output,
        )
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
