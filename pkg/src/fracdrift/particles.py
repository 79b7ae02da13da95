"""Signed-weight particle system for the nonlinear jump-diffusion SDE.

A solution candidate is a frozen ensemble Y; mapping it through

    X_{k+1} = X_k + dS_k + dt * drift(X_k; Y at t_k)

with drift(x) = (mass/N) sum_j w_j b_eps(x, Y_j) produces the next Picard
iterate.  Weights are the signs of the initial data at the sampled cells and
never change, so the weighted empirical measure represents a signed solution
through a probability-measure flow.  One noise bundle (increments + initial
positions) is drawn up front and reused verbatim across iterates: common
random numbers make pathwise distances meaningful.

The pairwise drift sum is direct (no tree or multipole acceleration); the
catalog Hilbert kernel gets a compiled table-interpolated inner loop,
documented O(N^2 * steps).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigurationError, ParameterError
from .fields import Field, GridSpec, lp_norm, wavenumbers, wrap_displacement
from .kernels import CZKernel, POINTWISE
from .spectral import StableParams

_TABLE_SIZE = 65536


# ---------------------------------------------------------------------------
# stable sampling
# ---------------------------------------------------------------------------


def sample_stable(s: StableParams, n: int, seed=None) -> np.ndarray:
    """i.i.d. standard symmetric alpha-stable draws (char. fn. exp(-|xi|^alpha)).

    Chambers-Mallows-Stuck construction; alpha = 2 returns the Gaussian limit
    Normal(0, 2) through the same formula.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = s.alpha
    U = rng.uniform(-np.pi / 2, np.pi / 2, n)
    W = rng.exponential(1.0, n)
    if a == 2.0:
        return 2.0 * np.sin(U) * np.sqrt(W)
    return (
        np.sin(a * U)
        / np.cos(U) ** (1.0 / a)
        * (np.cos((1.0 - a) * U) / W) ** ((1.0 - a) / a)
    )


def sample_one_sided_stable(rho: float, n: int, seed=None) -> np.ndarray:
    """Positive rho-stable draws with Laplace transform exp(-u^rho), 0 < rho < 1.

    Kanter's representation: with U uniform on (0, pi) and W exponential,
    (sin(rho U) / sin(U)^{1/rho}) * (sin((1-rho) U) / W)^{(1-rho)/rho}.
    """
    if not (0.0 < rho < 1.0):
        raise ParameterError(f"one-sided stability index must lie in (0, 1), got {rho}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    U = rng.uniform(0.0, np.pi, n)
    W = rng.exponential(1.0, n)
    return (
        np.sin(rho * U)
        / np.sin(U) ** (1.0 / rho)
        * (np.sin((1.0 - rho) * U) / W) ** ((1.0 - rho) / rho)
    )


def stable_increments(s: StableParams, d: int, shape, dt, rng: np.random.Generator) -> np.ndarray:
    """Increments of the isotropic alpha-stable process over steps of size dt.

    Self-similarity is the generation rule: each step is dt^{1/alpha} times a
    standard draw.  In d=2 isotropy is realized by Brownian subordination with
    a one-sided (alpha/2)-stable clock.
    """
    n, steps = shape
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (steps,))
    if d == 1:
        draws = sample_stable(s, n * steps, rng).reshape(n, steps)
        return (draws * dt[None, :] ** (1.0 / s.alpha))[:, :, None]
    if s.alpha == 2.0:
        z = rng.normal(size=(n, steps, d))
        return z * np.sqrt(2.0 * dt)[None, :, None]
    tau = sample_one_sided_stable(s.alpha / 2.0, n * steps, rng).reshape(n, steps)
    tau = tau * dt[None, :] ** (2.0 / s.alpha)
    z = rng.normal(size=(n, steps, d))
    return np.sqrt(2.0 * tau)[:, :, None] * z


def sample_initial(u0: Field, N: int, seed=None):
    """Positions from the normalized |u0| cell distribution, jittered in-cell;
    weights are the sign of u0 at the sampled cell; mass is the L^1 norm."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    total = lp_norm(u0, 1)
    if total <= 0.0:
        raise ParameterError("initial field must have positive L^1 mass")
    grid = u0.grid
    flat = u0.values.ravel()
    probs = np.abs(flat) * grid.cell_volume / total
    probs = probs / probs.sum()
    idx = rng.choice(flat.size, size=N, p=probs)
    weights = np.sign(flat[idx])
    h = grid.spacing
    cells = np.array(np.unravel_index(idx, grid.shape)).T.astype(float)  # (N, d)
    jitter = rng.uniform(-0.5, 0.5, size=(N, grid.d))
    positions = (cells + jitter) * h
    positions = np.mod(positions, grid.L)
    return positions, weights, total


# ---------------------------------------------------------------------------
# ensembles and noise bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NoiseBundle:
    """Pregenerated common random numbers: initial positions, signed weights,
    and per-step stable increments, reused verbatim across Picard iterates."""

    seed: int
    N: int
    t_grid: np.ndarray
    increments: np.ndarray  # (N, steps, d)
    initials: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)
    mass: float
    lineage: str


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """N signed-weight particle paths on a shared time grid.

    Paths are Euler interpolants stored unwrapped in R^d; the torus wrap is
    applied where positions are consumed (drift sums, density deposits).
    """

    grid: GridSpec
    t_grid: np.ndarray
    paths: np.ndarray  # (N, n_times, d)
    weights: np.ndarray  # (N,) in {-1, +1}
    mass: float
    lineage: str
    warnings: tuple = ()

    @property
    def N(self) -> int:
        return self.paths.shape[0]

    def positions(self, t_index: int) -> np.ndarray:
        return self.paths[:, t_index, :]

    def signed_mass(self) -> float:
        return float(self.mass * np.mean(self.weights))


def make_noise_bundle(
    u0: Field, s: StableParams, N: int, t_grid: np.ndarray, seed: int
) -> NoiseBundle:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ConfigurationError("time grid must start at 0 and strictly increase")
    rng = np.random.default_rng(seed)
    initials, weights, mass = sample_initial(u0, N, rng)
    dts = np.diff(t_grid)
    increments = stable_increments(s, u0.grid.d, (N, dts.size), dts, rng)
    digest = hashlib.sha1()
    digest.update(np.ascontiguousarray(initials).tobytes())
    digest.update(np.ascontiguousarray(t_grid).tobytes())
    lineage = f"{seed}:{N}:{digest.hexdigest()[:16]}"
    return NoiseBundle(
        seed=seed,
        N=N,
        t_grid=t_grid,
        increments=increments,
        initials=initials,
        weights=weights,
        mass=mass,
        lineage=lineage,
    )


def zero_drift_ensemble(noise: NoiseBundle, grid: GridSpec) -> ParticleEnsemble:
    """Pure-noise paths X_0 + S_t; the iteration's starting process.

    Accumulated step by step in the same order as the Euler map, so a
    zero-drift map reproduces these paths bitwise."""
    n_times = noise.t_grid.size
    paths = np.empty((noise.N, n_times, noise.initials.shape[1]))
    paths[:, 0, :] = noise.initials
    for k in range(n_times - 1):
        paths[:, k + 1, :] = paths[:, k, :] + noise.increments[:, k, :]
    return ParticleEnsemble(
        grid=grid,
        t_grid=noise.t_grid,
        paths=paths,
        weights=noise.weights,
        mass=noise.mass,
        lineage=noise.lineage,
    )


@dataclass(frozen=True)
class SimConfig:
    """Particle-run configuration; eps_kernel defaults to L * N^{-1/(d+2)}."""

    N: int
    t_grid: np.ndarray
    s: StableParams
    kern: CZKernel
    u0: Field
    eps_kernel: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.eps_kernel is None:
            grid = self.u0.grid
            eps = grid.L * self.N ** (-1.0 / (grid.d + 2))
            object.__setattr__(self, "eps_kernel", float(eps))
        if not self.eps_kernel > 0:
            raise ParameterError("interaction regularization length must be positive")
        if self.kern.form != POINTWISE:
            raise_ok = self.kern.name == "zero"
            if not raise_ok:
                raise ConfigurationError(
                    "particle drift needs a pointwise-evaluable kernel (or the zero kernel)"
                )


# ---------------------------------------------------------------------------
# drift evaluation: direct pairwise sums
# ---------------------------------------------------------------------------


@njit(cache=True)
def _drift_table_1d(targets, sources, weights, L, scale, table, inv_dr, exclude_diag):
    M = targets.shape[0]
    N = sources.shape[0]
    out = np.zeros(M)
    for i in range(M):
        acc = 0.0
        xi = targets[i]
        for j in range(N):
            if exclude_diag and j == i:
                continue
            r = xi - sources[j]
            r -= L * np.round(r / L)
            a = abs(r)
            pos = a * inv_dr
            idx = int(pos)
            if idx >= table.shape[0] - 1:
                idx = table.shape[0] - 2
            frac = pos - idx
            val = table[idx] * (1.0 - frac) + table[idx + 1] * frac
            if r < 0.0:
                val = -val
            acc += weights[j] * val
        out[i] = acc * scale
    return out


def _hilbert_taper_table(L: float, eps: float, size: int = _TABLE_SIZE) -> tuple[np.ndarray, float]:
    """|b_eps| on [0, L/2] for the periodized Hilbert kernel: exact cot beyond
    eps, linear taper through zero inside."""
    a = np.linspace(0.0, L / 2.0, size)
    vals = np.empty(size)
    edge = 1.0 / (np.tan(np.pi * eps / L) * L)
    inner = a <= eps
    vals[inner] = edge * (a[inner] / eps)
    with np.errstate(divide="ignore"):
        vals[~inner] = 1.0 / (np.tan(np.pi * a[~inner] / L) * L)
    dr = a[1] - a[0]
    return vals, 1.0 / dr


def drift_eval(
    x: np.ndarray,
    positions: np.ndarray,
    weights: np.ndarray,
    mass: float,
    kern: CZKernel,
    eps_kernel: float,
    L: float,
    exclude_diag: bool = False,
) -> np.ndarray:
    """Direct-sum interaction drift (mass/N) sum_j w_j b_eps(x, X_j).

    ``x`` is (M,) or (M, 1) in d=1.  ``exclude_diag`` drops the j = i term
    when targets are the ensemble's own particles.  An empty ensemble yields
    zero drift.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    positions = np.asarray(positions, dtype=float).reshape(-1)
    N = positions.shape[0]
    if N == 0:
        return np.zeros(x.shape[0])
    if exclude_diag and x.shape[0] != N:
        raise ConfigurationError("diagonal exclusion needs aligned target/source indices")
    scale = mass / N
    if kern.name == "zero":
        return np.zeros(x.shape[0])
    if kern.form != POINTWISE:
        raise ConfigurationError("particle drift needs a pointwise-evaluable kernel")
    if kern.name == "hilbert_pv":
        table, inv_dr = _hilbert_taper_table(L, eps_kernel)
        return _drift_table_1d(
            x, positions, np.asarray(weights, dtype=float), L, scale, table, inv_dr, exclude_diag
        )
    # generic pointwise kernel: blocked vectorized direct sum
    out = np.empty(x.shape[0])
    w = np.asarray(weights, dtype=float)
    block = max(1, int(2**22 // max(N, 1)))
    for start in range(0, x.shape[0], block):
        xs = x[start : start + block]
        vals = _generic_mollified(kern, xs[:, None], positions[None, :], L, eps_kernel)
        if exclude_diag:
            idx = np.arange(start, min(start + block, N))
            vals[np.arange(xs.shape[0]), idx] = 0.0
        out[start : start + block] = vals @ w * scale
    return out


def _generic_mollified(kern, x, y, L, eps):
    """b_eps pair values: exact kernel beyond eps, linear taper through 0 inside.

    The taper endpoint b(x, x - sign(r)*eps) carries the kernel's sign for the
    displacement's side, so the taper is edge * |r|/eps."""
    r = wrap_displacement(x - y, L)
    dist = np.abs(r)
    sign = np.where(r >= 0.0, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        outer = kern.b(x, x - r, L)
        edge = kern.b(x, x - sign * eps, L)
    vals = np.where(dist <= eps, edge * (dist / eps), outer)
    return np.where(dist == 0.0, 0.0, vals)


# ---------------------------------------------------------------------------
# the measure map and its Picard iteration
# ---------------------------------------------------------------------------


def picard_map(Y: ParticleEnsemble, noise: NoiseBundle, cfg: SimConfig) -> ParticleEnsemble:
    """Euler-solve the SDE driven by Y's weighted marginals, same noise.

    The output inherits Y's weights and mass (they attach to the common
    initial signs).  A step-size violation of the explicit-step bound
    dt * max|drift| < eps_kernel / 2 annotates the result with a warning.
    """
    if Y.N != noise.N or Y.t_grid.shape != noise.t_grid.shape or np.any(Y.t_grid != noise.t_grid):
        raise ConfigurationError("ensemble and noise bundle must share N and the time grid")
    if cfg.u0.grid.d != 1:
        raise ConfigurationError("the particle system is implemented for d=1")
    L = cfg.u0.grid.L
    n_times = noise.t_grid.size
    paths = np.empty_like(Y.paths)
    paths[:, 0, 0] = noise.initials[:, 0]
    warn: list[str] = []
    worst = 0.0
    for k in range(n_times - 1):
        dt = noise.t_grid[k + 1] - noise.t_grid[k]
        drift = drift_eval(
            paths[:, k, 0],
            Y.paths[:, k, 0],
            Y.weights,
            Y.mass,
            cfg.kern,
            cfg.eps_kernel,
            L,
            exclude_diag=True,
        )
        worst = max(worst, float(np.max(np.abs(drift))) * dt)
        paths[:, k + 1, 0] = paths[:, k, 0] + noise.increments[:, k, 0] + dt * drift
    if worst >= 0.5 * cfg.eps_kernel:
        warn.append(
            f"explicit-step bound violated: max dt*|drift| = {worst:.3g} "
            f">= eps_kernel/2 = {0.5 * cfg.eps_kernel:.3g}"
        )
    return ParticleEnsemble(
        grid=Y.grid,
        t_grid=Y.t_grid,
        paths=paths,
        weights=Y.weights,
        mass=Y.mass,
        lineage=Y.lineage,
        warnings=tuple(warn),
    )


@dataclass
class PicardRun:
    ensembles: list
    reports: list  # one DistanceReport per consecutive pair
    horizons: np.ndarray
    distance_matrix: np.ndarray  # (n_pairs, n_horizons) time-resolved d_{t,p}
    rho_matrix: np.ndarray
    lp_matrix: np.ndarray
    warnings: list
    converged_at: int | None


def picard_processes(
    cfg: SimConfig,
    n_iters: int,
    seed: int,
    p: float = 2.0,
    bandwidth: float | None = None,
    n_horizons: int = 9,
    tol: float | None = None,
    keep_ensembles: bool = True,
) -> PicardRun:
    """Iterate the measure map from the zero-drift process, measuring the
    combined distance between consecutive iterates after each step.

    Emits a non-contraction warning when the distance increases three times
    in a row; declares convergence when it falls below ``tol``.
    """
    from .metrics import ensemble_distance, lp_density_of_horizons, rho_of_horizons

    if n_iters < 2:
        raise ParameterError(f"need at least 2 iterations, got {n_iters}")
    noise = make_noise_bundle(cfg.u0, cfg.s, cfg.N, cfg.t_grid, seed)
    grid = cfg.u0.grid
    current = zero_drift_ensemble(noise, grid)
    t_grid = noise.t_grid
    idx = np.unique(np.linspace(1, t_grid.size - 1, min(n_horizons, t_grid.size - 1)).astype(int))
    horizons = t_grid[idx]

    ensembles = [current]
    reports = []
    rho_rows = []
    lp_rows = []
    warnings_: list[str] = []
    converged_at = None
    for n in range(n_iters):
        new = picard_map(current, noise, cfg)
        warnings_.extend(new.warnings)
        rep = ensemble_distance(current, new, p=p, bandwidth=bandwidth)
        reports.append(rep)
        rho_rows.append(rho_of_horizons(current, new, p, horizons))
        lp_rows.append(lp_density_of_horizons(current, new, p, horizons, bandwidth))
        if keep_ensembles or n == n_iters - 1:
            ensembles.append(new)
        else:
            ensembles[-1] = new
        current = new
        d_seq = [r.d_Tp for r in reports]
        if len(d_seq) >= 4 and all(d_seq[-k] > d_seq[-k - 1] for k in (1, 2, 3)):
            ratios = [d_seq[i + 1] / d_seq[i] for i in range(len(d_seq) - 1)]
            warnings_.append(
                "distance increased for 3 consecutive iterations; ratios "
                + ", ".join(f"{r:.3f}" for r in ratios)
            )
        if tol is not None and rep.d_Tp < tol and converged_at is None:
            converged_at = n
            break
    rho_m = np.asarray(rho_rows)
    lp_m = np.asarray(lp_rows)
    return PicardRun(
        ensembles=ensembles,
        reports=reports,
        horizons=horizons,
        distance_matrix=np.maximum(rho_m, lp_m),
        rho_matrix=rho_m,
        lp_matrix=lp_m,
        warnings=warnings_,
        converged_at=converged_at,
    )


# ---------------------------------------------------------------------------
# density estimation
# ---------------------------------------------------------------------------


def default_bandwidth(positions: np.ndarray, N: int, grid: GridSpec) -> float:
    """Heavy-tail-safe bandwidth 1.06 * MAD * N^{-1/5}, floored at the grid spacing."""
    pos = np.asarray(positions, dtype=float).reshape(N, -1)
    mad = float(np.median(np.abs(pos[:, 0] - np.median(pos[:, 0]))))
    return max(1.06 * mad * N ** (-0.2), grid.spacing)


def density_from_ensemble(
    ens: ParticleEnsemble, t: float, bandwidth: float, grid: GridSpec | None = None
) -> Field:
    """Signed kernel-density estimate on the grid at a stored time.

    Cloud-in-cell deposit of the signed weights followed by an exact periodic
    Gaussian smoothing of the requested bandwidth; the deposit conserves the
    signed mass exactly.
    """
    grid = grid if grid is not None else ens.grid
    matches = np.where(np.abs(ens.t_grid - t) <= 1e-12 * max(1.0, abs(t)))[0]
    if matches.size == 0:
        raise ParameterError(f"time {t} is not on the ensemble's time grid")
    if bandwidth < grid.spacing:
        raise ParameterError(
            f"bandwidth {bandwidth} is below the grid spacing {grid.spacing}"
        )
    if grid.d != 1:
        raise ParameterError("density estimation is implemented for d=1")
    pos = np.mod(ens.paths[:, matches[0], 0], grid.L)
    h = grid.spacing
    scaled = pos / h
    i0 = np.floor(scaled).astype(int) % grid.n
    frac = scaled - np.floor(scaled)
    w = ens.weights * (ens.mass / ens.N) / h
    deposit = np.zeros(grid.n)
    np.add.at(deposit, i0, w * (1.0 - frac))
    np.add.at(deposit, (i0 + 1) % grid.n, w * frac)
    (k,) = wavenumbers(grid)
    smooth = np.fft.ifft(np.fft.fft(deposit) * np.exp(-0.5 * (k * bandwidth) ** 2)).real
    return Field(grid, smooth)
