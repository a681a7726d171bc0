"""Distributionally robust surrogate-based receding-horizon control.

Pipeline: simulate charging episodes on a battery plant, compress states
with PCA, train feedforward surrogates for window cost and constraint
trajectories, convert surrogate test residuals into a robust constraint
offset via Wasserstein ambiguity sets, and run the resulting controller
closed-loop against CCCV and non-robust baselines.
"""

__version__ = "0.1.0"
