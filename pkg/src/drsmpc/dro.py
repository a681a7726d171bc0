"""Wasserstein distributionally robust constraint offsets from residual
samples.

Pipeline: whiten the residuals, pick an ambiguity radius (concentration
constant by default, support diameter as fallback), bisect on the
hypercube half-width sigma until the worst-case probability of leaving
the hypercube drops to the risk level, then map the hypercube corners
back to residual units. With one residual dimension the certificate
exports the scalar offset that shifts the constraint boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleAtSigmaMax, OverflowGuard, SingularCovariance
from .iotools import read_json, write_json
from .validation import as_matrix

_FORMAT_VERSION = 1
_EXP_ARG_MAX = 700.0  # exp overflow threshold for float64
_ALPHA_LO = 1e-6
_ALPHA_CAP = 1e12


@dataclass(frozen=True)
class ResidualSamples:
    """Raw residual matrix with its sample mean and covariance."""

    data: np.ndarray  # (ell, m)
    mean: np.ndarray  # (m,)
    cov: np.ndarray  # (m, m), population normalization

    @classmethod
    def from_data(cls, data) -> "ResidualSamples":
        data = as_matrix(data, "residuals")
        if data.shape[0] < 2:
            raise ValueError("need at least two residual samples")
        mean = data.mean(axis=0)
        centered = data - mean
        cov = centered.T @ centered / data.shape[0]
        return cls(data=data, mean=mean, cov=cov)

    @property
    def ell(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class NormalizedSamples:
    """Whitened residuals plus the maps back to residual units."""

    theta: np.ndarray  # (ell, m)
    inf_norms: np.ndarray  # (ell,)
    sigma_max: float
    cov_root: np.ndarray  # (m, m), symmetric square root of ridged covariance
    cov_root_inv: np.ndarray
    mean: np.ndarray  # (m,) original residual mean

    @property
    def ell(self) -> int:
        return self.theta.shape[0]

    @property
    def m(self) -> int:
        return self.theta.shape[1]


def default_ridge(residuals: ResidualSamples) -> float:
    return 1e-10 * float(np.trace(residuals.cov)) / residuals.m


def normalize(residuals: ResidualSamples, ridge: float | None = None) -> NormalizedSamples:
    """Whiten residuals: theta_i = (cov + ridge I)^{-1/2} (r_i - mean).

    The support bound sigma_max defaults to three times the largest
    whitened infinity norm.
    """
    if ridge is None:
        ridge = default_ridge(residuals)
    cov = residuals.cov + ridge * np.eye(residuals.m)
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() <= 0.0:
        raise SingularCovariance(
            f"residual covariance not positive definite (min eigenvalue {evals.min():.3g})"
        )
    root = (evecs * np.sqrt(evals)) @ evecs.T
    root_inv = (evecs / np.sqrt(evals)) @ evecs.T
    theta = (residuals.data - residuals.mean) @ root_inv.T
    inf_norms = np.max(np.abs(theta), axis=1)
    return NormalizedSamples(
        theta=theta,
        inf_norms=inf_norms,
        sigma_max=3.0 * float(inf_norms.max()),
        cov_root=root,
        cov_root_inv=root_inv,
        mean=residuals.mean.copy(),
    )


def radius_diameter(diameter: float, ell: int, beta: float) -> float:
    """Ambiguity radius from an a-priori support diameter."""
    if diameter <= 0 or ell < 1 or not 0.0 < beta < 1.0:
        raise ValueError("need diameter > 0, ell >= 1, beta in (0, 1)")
    return diameter * np.sqrt(2.0 / ell * np.log(1.0 / (1.0 - beta)))


def concentration_constant(normalized: NormalizedSamples) -> float:
    """C = 2 inf_a { (1/2a)(1 + ln mean exp(a ||theta_k - mean||_1^2)) }^{1/2}.

    The scalar minimization runs golden-section in log space over
    [1e-6, a_hi], where a_hi keeps every exponent below the float64
    overflow threshold.
    """
    centered = normalized.theta - normalized.theta.mean(axis=0)
    sq = np.sum(np.abs(centered), axis=1) ** 2
    peak = float(sq.max())
    alpha_hi = min(_ALPHA_CAP, _EXP_ARG_MAX / peak) if peak > 0.0 else _ALPHA_CAP
    if alpha_hi <= _ALPHA_LO:
        raise OverflowGuard(
            f"squared sample norms up to {peak:.3g} overflow exp at every usable alpha"
        )

    def objective(log_alpha: float) -> float:
        alpha = np.exp(log_alpha)
        return (1.0 + np.log(np.mean(np.exp(alpha * sq)))) / (2.0 * alpha)

    lo, hi = np.log(_ALPHA_LO), np.log(alpha_hi)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(200):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(d)
        if b - a < 1e-12:
            break
    best = min(objective(lo), objective(hi), fc, fd)
    return 2.0 * float(np.sqrt(best))


def radius_concentration(
    normalized: NormalizedSamples, ell: int, beta: float
) -> tuple[float, float]:
    """Concentration-constant radius: returns (C, epsilon)."""
    if ell < 1 or not 0.0 < beta < 1.0:
        raise ValueError("need ell >= 1 and beta in (0, 1)")
    c_const = concentration_constant(normalized)
    return c_const, c_const * np.sqrt(2.0 / ell * np.log(1.0 / (1.0 - beta)))


def worst_case_h(
    sigma: float, lam: float, epsilon: float, normalized: NormalizedSamples
) -> float:
    """Dual objective bounding the worst-case leave-the-hypercube probability."""
    if sigma < 0.0 or lam < 0.0:
        raise ValueError("sigma and lambda must be nonnegative")
    gaps = np.maximum(sigma - normalized.inf_norms, 0.0)
    return float(lam * epsilon + np.mean(np.maximum(1.0 - lam * gaps, 0.0)))


def minimize_h_over_lambda(
    sigma: float,
    epsilon: float,
    normalized: NormalizedSamples,
    lambda_bounds: tuple | None = None,
) -> tuple[float, float]:
    """Exact minimizer of the convex piecewise-linear dual in lambda.

    Kinks sit at 1/(sigma - ||theta_j||_inf) for samples inside the
    hypercube; past the largest kink the slope is epsilon >= 0, so
    checking lambda = 0, every kink, and the bounds is exhaustive.
    """
    gaps = np.maximum(sigma - normalized.inf_norms, 0.0)
    positive = gaps[gaps > 0.0]
    candidates = [0.0] + (1.0 / np.unique(positive)).tolist()
    if lambda_bounds is not None:
        lo, hi = lambda_bounds
        candidates = [min(max(c, lo), hi) for c in candidates] + [lo, hi]
    best_lam, best_h = 0.0, np.inf
    for lam in candidates:
        h = worst_case_h(sigma, lam, epsilon, normalized)
        if h < best_h - 1e-15:
            best_lam, best_h = lam, h
    return best_lam, best_h


def compute_sigma(
    normalized: NormalizedSamples,
    epsilon: float,
    eta: float,
    sigma_max: float | None = None,
    tol: float = 1e-6,
) -> tuple[float, float]:
    """Bisect on sigma for the smallest hypercube certified at risk eta.

    Returns the upper bisection bound, so the worst-case probability at
    the returned sigma is guaranteed <= eta.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must be in (0, 1)")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    if sigma_max is None:
        sigma_max = normalized.sigma_max
    _, h_at_max = minimize_h_over_lambda(sigma_max, epsilon, normalized)
    if h_at_max > eta:
        raise InfeasibleAtSigmaMax(
            f"worst-case probability {h_at_max:.4g} > eta {eta} at sigma_max {sigma_max:.4g}; "
            "raise sigma_max or relax eta/epsilon"
        )
    lo, hi = 0.0, float(sigma_max)
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        _, h_mid = minimize_h_over_lambda(mid, epsilon, normalized)
        if h_mid > eta:
            lo = mid
        else:
            hi = mid
    lam_star, _ = minimize_h_over_lambda(hi, epsilon, normalized)
    return hi, lam_star


@dataclass(frozen=True)
class AmbiguityCertificate:
    """Robust offset bundle: radius, hypercube half-width, and vertices."""

    epsilon: float
    beta: float
    eta: float
    sigma: float
    lambda_star: float
    radius_method: str  # "concentration" | "diameter"
    radius_constant: float  # C or D depending on method
    vertices: np.ndarray  # (2^m, m) in residual units
    offset: float | None  # scalar pessimistic offset when m == 1
    tol: float
    provenance: dict = field(default_factory=dict)

    def save(self, path) -> None:
        write_json(path, {
            "format_version": _FORMAT_VERSION,
            "kind": "ambiguity_certificate",
            "epsilon": self.epsilon,
            "beta": self.beta,
            "eta": self.eta,
            "sigma": self.sigma,
            "lambda_star": self.lambda_star,
            "radius_method": self.radius_method,
            "radius_constant": self.radius_constant,
            "vertices": self.vertices.tolist(),
            "offset": self.offset,
            "tol": self.tol,
            "provenance": self.provenance,
        })

    @classmethod
    def load(cls, path) -> "AmbiguityCertificate":
        meta = read_json(path)
        if meta.get("kind") != "ambiguity_certificate":
            raise ValueError(f"{path}: not a certificate file")
        return cls(
            epsilon=float(meta["epsilon"]),
            beta=float(meta["beta"]),
            eta=float(meta["eta"]),
            sigma=float(meta["sigma"]),
            lambda_star=float(meta["lambda_star"]),
            radius_method=meta["radius_method"],
            radius_constant=float(meta["radius_constant"]),
            vertices=np.asarray(meta["vertices"], dtype=float),
            offset=None if meta["offset"] is None else float(meta["offset"]),
            tol=float(meta["tol"]),
            provenance=dict(meta["provenance"]),
        )


def hypercube_vertices(normalized: NormalizedSamples, sigma: float) -> np.ndarray:
    """Map the corners of [-sigma, sigma]^m back to residual units."""
    m = normalized.m
    corners = np.array(np.meshgrid(*([[-sigma, sigma]] * m), indexing="ij"))
    corners = corners.reshape(m, -1).T  # (2^m, m)
    return corners @ normalized.cov_root.T + normalized.mean


def build_certificate(
    residuals,
    beta: float,
    eta: float,
    method: str = "concentration",
    tol: float = 1e-6,
    ridge: float | None = None,
    diameter: float | None = None,
    sigma_max: float | None = None,
    provenance: dict | None = None,
) -> AmbiguityCertificate:
    """Full pipeline from residual samples to a robust offset certificate.

    ``diameter`` is only consulted by the diameter method (default: the
    triangle-inequality bound 2 max ||theta_k - mean||_1). The
    concentration method falls back to the diameter radius with a
    warning if its exponents overflow at every usable alpha.
    """
    if not isinstance(residuals, ResidualSamples):
        residuals = ResidualSamples.from_data(residuals)
    if method not in ("concentration", "diameter"):
        raise ValueError("method must be 'concentration' or 'diameter'")
    normalized = normalize(residuals, ridge)

    used_method = method
    if method == "concentration":
        try:
            constant, epsilon = radius_concentration(normalized, residuals.ell, beta)
        except OverflowGuard as exc:
            warnings.warn(f"{exc}; falling back to the diameter radius", stacklevel=2)
            used_method = "diameter"
    if used_method == "diameter":
        if diameter is None:
            centered = normalized.theta - normalized.theta.mean(axis=0)
            diameter = 2.0 * float(np.sum(np.abs(centered), axis=1).max())
        constant = diameter
        epsilon = radius_diameter(diameter, residuals.ell, beta)

    sigma, lam_star = compute_sigma(normalized, epsilon, eta, sigma_max, tol)
    vertices = hypercube_vertices(normalized, sigma)
    offset = float(vertices.max()) if residuals.m == 1 else None
    return AmbiguityCertificate(
        epsilon=float(epsilon),
        beta=float(beta),
        eta=float(eta),
        sigma=float(sigma),
        lambda_star=float(lam_star),
        radius_method=used_method,
        radius_constant=float(constant),
        vertices=vertices,
        offset=offset,
        tol=float(tol),
        provenance={"ell": residuals.ell, "m": residuals.m, **(provenance or {})},
    )
