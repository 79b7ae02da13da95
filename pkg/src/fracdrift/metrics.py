"""Distances between particle ensembles and the contraction diagnostic.

The path-space distance is estimated through the synchronous coupling: two
ensembles sharing a noise bundle and initial positions form one admissible
coupling, so the sampled truncated path-sup moment upper-bounds the
infimum-over-couplings distance.  It is reported as an upper bound, never as
the infimum.  The combined metric takes the max of that estimate and the
sup-over-time L^p distance of the estimated one-time densities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LineageError, ParameterError
from .fields import lp_norm
from .particles import ParticleEnsemble, default_bandwidth, density_from_ensemble


@dataclass(frozen=True)
class DistanceReport:
    """Combined ensemble distance: d_Tp = max(rho, lp_density)."""

    rho: float
    lp_density: float
    d_Tp: float
    p: float
    T: float

    def __post_init__(self):
        if self.rho < 0 or self.lp_density < 0:
            raise ParameterError("distances must be nonnegative")
        if abs(self.d_Tp - max(self.rho, self.lp_density)) > 1e-12:
            raise ParameterError("d_Tp must equal max(rho, lp_density)")


def _check_lineage(ens1: ParticleEnsemble, ens2: ParticleEnsemble) -> None:
    if ens1.lineage != ens2.lineage:
        raise LineageError(
            "ensembles do not share noise-bundle lineage; a pathwise distance "
            "with unmatched initials would not bound the coupling infimum"
        )
    if ens1.t_grid.shape != ens2.t_grid.shape or np.any(ens1.t_grid != ens2.t_grid):
        raise LineageError("ensembles use different time grids")


def _truncated_sup(ens1: ParticleEnsemble, ens2: ParticleEnsemble, mask) -> np.ndarray:
    disp = ens1.paths[:, mask, :] - ens2.paths[:, mask, :]
    mag = np.sqrt(np.sum(disp**2, axis=2))
    return np.minimum(mag.max(axis=1), 1.0)


def coupled_path_distance(
    ens1: ParticleEnsemble, ens2: ParticleEnsemble, p: float, T: float | None = None
) -> float:
    """Synchronous-coupling estimate of the truncated path-sup distance:

        ((1/N) sum_j [sup_{t<=T} |X^1_j - X^2_j| ^ 1]^p)^{1/p}.

    Requires shared lineage (same noise bundle and matched initials).
    """
    _check_lineage(ens1, ens2)
    if p <= 0:
        raise ParameterError(f"moment exponent must be positive, got {p}")
    T = ens1.t_grid[-1] if T is None else T
    mask = ens1.t_grid <= T + 1e-12
    sup = _truncated_sup(ens1, ens2, mask)
    return float(np.mean(sup**p) ** (1.0 / p))


def rho_of_horizons(
    ens1: ParticleEnsemble, ens2: ParticleEnsemble, p: float, horizons
) -> np.ndarray:
    """Coupled path distance as a function of the horizon (vectorized running sup)."""
    _check_lineage(ens1, ens2)
    disp = ens1.paths - ens2.paths
    mag = np.sqrt(np.sum(disp**2, axis=2))
    running = np.maximum.accumulate(mag, axis=1)
    out = np.empty(len(horizons))
    for i, T in enumerate(horizons):
        idx = int(np.searchsorted(ens1.t_grid, T + 1e-12) - 1)
        sup = np.minimum(running[:, idx], 1.0)
        out[i] = float(np.mean(sup**p) ** (1.0 / p))
    return out


def exact_w1_slice(ens1: ParticleEnsemble, ens2: ParticleEnsemble, t: float) -> float:
    """Exact 1-Wasserstein distance of the time-t marginals (d=1, equal N,
    nonnegative weights): mean absolute difference of sorted samples."""
    if ens1.paths.shape[2] != 1:
        raise ParameterError("exact slice distance is d=1 only")
    if ens1.N != ens2.N:
        raise ParameterError("exact slice distance needs equal particle counts")
    if np.any(ens1.weights < 0) or np.any(ens2.weights < 0):
        raise ParameterError("signed weights are unsupported by the exact slice distance")
    i1 = int(np.argmin(np.abs(ens1.t_grid - t)))
    i2 = int(np.argmin(np.abs(ens2.t_grid - t)))
    a = np.sort(ens1.paths[:, i1, 0])
    b = np.sort(ens2.paths[:, i2, 0])
    return float(np.mean(np.abs(a - b)))


def lp_density_distance(
    ens1: ParticleEnsemble,
    ens2: ParticleEnsemble,
    p: float,
    bandwidth: float | None = None,
    horizons=None,
) -> float:
    """Sup over the time grid of the L^p distance of the density estimates,
    both ensembles smoothed at the same bandwidth."""
    if ens1.t_grid.shape != ens2.t_grid.shape or np.any(ens1.t_grid != ens2.t_grid):
        raise ParameterError("ensembles use different time grids")
    bw = _shared_bandwidth(ens1, ens2, bandwidth)
    times = ens1.t_grid if horizons is None else np.asarray(horizons)
    best = 0.0
    for t in times:
        f1 = density_from_ensemble(ens1, float(t), bw)
        f2 = density_from_ensemble(ens2, float(t), bw)
        best = max(best, lp_norm(f1 - f2, p))
    return best


def _shared_bandwidth(ens1, ens2, bandwidth) -> float:
    if bandwidth is not None:
        if bandwidth < ens1.grid.spacing:
            raise ParameterError(
                f"bandwidth {bandwidth} is below the grid spacing {ens1.grid.spacing}"
            )
        return bandwidth
    return max(
        default_bandwidth(ens1.paths[:, 0, :], ens1.N, ens1.grid),
        default_bandwidth(ens2.paths[:, 0, :], ens2.N, ens2.grid),
    )


def ensemble_distance(
    ens1: ParticleEnsemble,
    ens2: ParticleEnsemble,
    p: float,
    bandwidth: float | None = None,
) -> DistanceReport:
    """Combined metric report: max of the coupled path estimate and the
    density distance over the full horizon."""
    rho = coupled_path_distance(ens1, ens2, p)
    lp = lp_density_distance(ens1, ens2, p, bandwidth)
    return DistanceReport(rho=rho, lp_density=lp, d_Tp=max(rho, lp), p=p, T=float(ens1.t_grid[-1]))


def lp_density_of_horizons(
    ens1: ParticleEnsemble,
    ens2: ParticleEnsemble,
    p: float,
    horizons,
    bandwidth: float | None = None,
) -> np.ndarray:
    """Running sup-over-time density distance per horizon."""
    bw = _shared_bandwidth(ens1, ens2, bandwidth)
    lp = np.empty(len(horizons))
    running = 0.0
    for i, t in enumerate(horizons):
        f1 = density_from_ensemble(ens1, float(t), bw)
        f2 = density_from_ensemble(ens2, float(t), bw)
        running = max(running, lp_norm(f1 - f2, p))
        lp[i] = running
    return lp


def distance_of_horizons(
    ens1: ParticleEnsemble,
    ens2: ParticleEnsemble,
    p: float,
    horizons,
    bandwidth: float | None = None,
) -> np.ndarray:
    """Time-resolved combined distance d_{t,p} on a horizon grid."""
    rho = rho_of_horizons(ens1, ens2, p, horizons)
    lp = lp_density_of_horizons(ens1, ens2, p, horizons, bandwidth)
    return np.maximum(rho, lp)


@dataclass
class ContractionDiagnostic:
    """Per-step smallest feasible integral-inequality constants and the
    factorial-shape fit of the iteration distances."""

    C_hats: np.ndarray  # per-iteration smallest feasible constant
    fitted_C: float
    log_offset: float
    shape_residual: float  # RMS log residual of the C^n/n! fit
    factorial_consistent: bool
    ratios: np.ndarray  # d_{n+1} / d_n
    monotone_time: bool  # time-resolved distances nondecreasing in t


def contraction_diagnostic(
    horizons: np.ndarray,
    distance_matrix: np.ndarray,
    T: float,
    shape_tolerance: float = np.log(1.2),
) -> ContractionDiagnostic:
    """Check the integral contraction inequality and the factorial decay shape.

    (a) For each iteration n >= 1, the smallest C with
        d_n(t) <= C * int_0^t d_{n-1}(s) ds on the horizon grid.
    (b) A least-squares fit of log d_n(T) to offset + n log C - log n! over
        n >= 1, consistent at tolerance ``shape_tolerance`` on the RMS log
        residual.  The n = 0 distance is the raw drift-magnitude baseline
        (its scale is distorted by the path-sup truncation), so the factorial
        comparison starts from the first mapped pair.

    Non-monotone time-resolved distances are reported, not fatal.
    """
    horizons = np.asarray(horizons, dtype=float)
    D = np.asarray(distance_matrix, dtype=float)
    if D.ndim != 2 or D.shape[0] < 3:
        raise ParameterError("need time-resolved distances for at least 3 iterations")
    if D.shape[1] != horizons.size:
        raise ParameterError("distance matrix does not match the horizon grid")

    c_hats = np.full(D.shape[0] - 1, np.nan)
    for n in range(1, D.shape[0]):
        integral = np.concatenate(
            ([0.0], np.cumsum(0.5 * (D[n - 1, 1:] + D[n - 1, :-1]) * np.diff(horizons)))
        )
        integral += D[n - 1, 0] * horizons[0]  # leading panel from t = 0
        ok = integral > 1e-300
        if np.any(ok):
            c_hats[n - 1] = float(np.max(D[n, ok] / integral[ok]))

    d_T = D[:, -1]
    n_idx = np.arange(D.shape[0])
    usable = (d_T > 0) & (n_idx >= 1)
    if np.sum(usable) >= 3:
        y = np.log(d_T[usable]) + np.array(
            [float(np.sum(np.log(np.arange(1, k + 1)))) for k in n_idx[usable]]
        )
        coef = np.polyfit(n_idx[usable], y, 1)
        log_c, offset = float(coef[0]), float(coef[1])
        fit = offset + log_c * n_idx[usable]
        resid = float(np.sqrt(np.mean((y - fit) ** 2)))
    else:
        log_c, offset, resid = np.nan, np.nan, np.inf

    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = d_T[1:] / d_T[:-1]
    return ContractionDiagnostic(
        C_hats=c_hats,
        fitted_C=float(np.exp(log_c)) if np.isfinite(log_c) else np.nan,
        log_offset=offset,
        shape_residual=resid,
        factorial_consistent=bool(resid <= shape_tolerance),
        ratios=ratios,
        monotone_time=bool(np.all(np.diff(D, axis=1) >= -1e-12)),
    )
