"""Shared deterministic SVG output settings."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

VARIANT_COLORS = {
    "cccv": "tab:gray",
    "nonrobust": "tab:orange",
    "robust": "tab:blue",
}


def apply_style():
    matplotlib.rcParams.update({
        # fixed hashsalt keeps SVG element ids identical across reruns
        "svg.hashsalt": "charging-figures",
        "figure.dpi": 100,
        "savefig.dpi": 100,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
        "legend.framealpha": 0.9,
    })


def save_svg(fig, path):
    # a Date entry would make reruns differ byte for byte
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
