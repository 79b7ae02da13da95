import numpy as np
import pytest
from scipy import stats

from fracdrift import Field, GridSpec, StableParams, field_from_function, lp_norm
from fracdrift.errors import ConfigurationError, ParameterError
from fracdrift.fields import mass, wrap_displacement
from fracdrift.kernels import cz_apply, hilbert_kernel, periodized_hilbert_pointwise, zero_kernel
from fracdrift.particles import (
    SimConfig,
    default_bandwidth,
    density_from_ensemble,
    drift_eval,
    make_noise_bundle,
    picard_map,
    picard_processes,
    sample_initial,
    sample_one_sided_stable,
    sample_stable,
    stable_increments,
    zero_drift_ensemble,
)

from conftest import gaussian_bump_field


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_stable_characteristic_function(alpha):
    s = StableParams(alpha, 1)
    draws = sample_stable(s, 100_000, seed=0)
    for xi in (0.5, 1.0, 2.0):
        vals = np.cos(xi * draws)
        se = np.std(vals) / np.sqrt(draws.size)
        assert abs(np.mean(vals) - np.exp(-abs(xi) ** alpha)) < 3 * se


def test_stable_gaussian_limit_ks():
    draws = sample_stable(StableParams(2.0, 1), 10_000, seed=1)
    res = stats.kstest(draws, "norm", args=(0.0, np.sqrt(2.0)))
    assert res.pvalue > 0.01


def test_stable_symmetry():
    draws = sample_stable(StableParams(1.5, 1), 40_000, seed=2)
    assert abs(np.mean(np.sign(draws))) < 3 / np.sqrt(draws.size)


def test_one_sided_laplace_transform():
    tau = sample_one_sided_stable(0.75, 200_000, seed=3)
    assert np.all(tau > 0)
    for lam in (0.5, 1.0, 2.0):
        vals = np.exp(-lam * tau)
        se = np.std(vals) / np.sqrt(tau.size)
        assert abs(np.mean(vals) - np.exp(-(lam**0.75))) < 4 * se


def test_isotropic_2d_increments():
    s = StableParams(1.5, 2)
    rng = np.random.default_rng(9)
    inc = stable_increments(s, 2, (150_000, 1), 0.3, rng)[:, 0, :]
    for xi in (np.array([1.0, 0.0]), np.array([0.7, 0.7])):
        vals = np.cos(inc @ xi)
        se = np.std(vals) / np.sqrt(inc.shape[0])
        target = np.exp(-0.3 * np.linalg.norm(xi) ** 1.5)
        assert abs(np.mean(vals) - target) < 4 * se


def test_self_similarity_median_scaling():
    # pure-noise displacement medians scale like t^{1/alpha}
    s = StableParams(1.5, 1)
    rng = np.random.default_rng(4)
    one = stable_increments(s, 1, (100_000, 2), [0.2, 0.2], rng)
    s_t = np.abs(one[:, 0, 0])
    s_2t = np.abs(one[:, 0, 0] + one[:, 1, 0])
    ratio = np.median(s_2t) / np.median(s_t)
    assert ratio == pytest.approx(2 ** (1 / 1.5), rel=0.05)


# ---------------------------------------------------------------------------
# initial sampling
# ---------------------------------------------------------------------------


def test_sample_initial_positive_weights(grid):
    u0 = gaussian_bump_field(grid)
    pos, w, m = sample_initial(u0, 5000, seed=3)
    assert np.all(w == 1.0)
    assert m == pytest.approx(lp_norm(u0, 1))
    assert np.all((pos >= 0) & (pos < grid.L))


def test_sample_initial_odd_data_weight_split(grid):
    u0 = field_from_function(grid, np.sin)  # odd about L/2
    _, w, _ = sample_initial(u0, 10_000, seed=4)
    assert abs(np.mean(w < 0) - 0.5) < 3 / np.sqrt(10_000)


def test_sample_initial_ks_consistency(grid):
    u0 = gaussian_bump_field(grid)
    N = 10_000
    pos, _, m = sample_initial(u0, N, seed=5)
    xs = grid.axis_coords()
    cdf = np.cumsum(np.abs(u0.values)) * grid.spacing / m
    emp = np.sort(pos[:, 0])
    theo = np.interp(emp, xs, cdf)
    ks = np.max(np.abs(theo - np.arange(1, N + 1) / N))
    assert ks < 2 / np.sqrt(N)


def test_sample_initial_rejects_zero_field(grid):
    with pytest.raises(ParameterError):
        sample_initial(Field(grid, np.zeros(grid.shape)), 100, seed=0)


# ---------------------------------------------------------------------------
# drift evaluation
# ---------------------------------------------------------------------------


def test_drift_single_particle_self_excluded():
    K = periodized_hilbert_pointwise()
    d = drift_eval(np.array([1.0]), np.array([1.0]), np.array([1.0]), 1.0, K, 0.1, 2 * np.pi,
                   exclude_diag=True)
    assert d[0] == 0.0


def test_drift_empty_ensemble():
    K = periodized_hilbert_pointwise()
    d = drift_eval(np.array([1.0, 2.0]), np.zeros(0), np.zeros(0), 1.0, K, 0.1, 2 * np.pi)
    assert np.all(d == 0.0)


def test_drift_pair_antisymmetry():
    K = periodized_hilbert_pointwise()
    pts = np.array([2.0, 4.0])
    d = drift_eval(pts, pts, np.array([1.0, 1.0]), 1.0, K, 0.1, 2 * np.pi, exclude_diag=True)
    assert d[0] == pytest.approx(-d[1], rel=1e-12)


def test_drift_generic_path_matches_table_path(grid):
    # the compiled table fast path and the generic blocked path agree
    from fracdrift.particles import _generic_mollified

    K = periodized_hilbert_pointwise()
    rng = np.random.default_rng(6)
    src = rng.uniform(0, grid.L, 400)
    w = rng.choice([-1.0, 1.0], 400)
    targets = rng.uniform(0, grid.L, 100)
    fast = drift_eval(targets, src, w, 2.0, K, 0.2, grid.L)
    vals = _generic_mollified(K, targets[:, None], src[None, :], grid.L, 0.2)
    slow = vals @ w * (2.0 / 400)
    assert np.max(np.abs(fast - slow)) < 1e-6


def test_drift_converges_to_multiplier_operator(grid):
    # large-ensemble drift sampled from smooth positive u approaches the
    # multiplier-form operator; discrepancy decreases through the N sweep
    u0 = gaussian_bump_field(grid)
    target = cz_apply(hilbert_kernel(), u0)
    errs = []
    for N in (1000, 10_000, 100_000):
        pos, w, m = sample_initial(u0, N, seed=7)
        eps = grid.L * N ** (-1.0 / 3.0)
        drift = drift_eval(
            grid.axis_coords(), pos[:, 0], w, m, periodized_hilbert_pointwise(), eps, grid.L
        )
        errs.append(lp_norm(Field(grid, drift - target.values), 2))
    assert errs[0] > errs[1] > errs[2]


# ---------------------------------------------------------------------------
# the measure map
# ---------------------------------------------------------------------------


def _sim(grid, N=400, T=0.25, steps=10, amp=1.0, kern=None):
    u0 = gaussian_bump_field(grid, amplitude=amp)
    return SimConfig(
        N=N,
        t_grid=np.linspace(0.0, T, steps + 1),
        s=StableParams(1.5, 1),
        kern=kern if kern is not None else periodized_hilbert_pointwise(),
        u0=u0,
    )


def test_zero_kernel_map_is_pure_noise(grid):
    cfg = _sim(grid, kern=zero_kernel())
    noise = make_noise_bundle(cfg.u0, cfg.s, cfg.N, cfg.t_grid, seed=0)
    y0 = zero_drift_ensemble(noise, grid)
    y1 = picard_map(y0, noise, cfg)
    assert np.array_equal(y0.paths, y1.paths)
    y2 = picard_map(y1, noise, cfg)
    assert np.array_equal(y1.paths, y2.paths)


def test_map_preserves_weights_and_mass(grid):
    cfg = _sim(grid, amp=2.0)
    noise = make_noise_bundle(cfg.u0, cfg.s, cfg.N, cfg.t_grid, seed=1)
    y0 = zero_drift_ensemble(noise, grid)
    y1 = picard_map(y0, noise, cfg)
    assert np.array_equal(y0.weights, y1.weights)
    assert y0.mass == y1.mass
    assert y0.signed_mass() == y1.signed_mass()
    assert y1.lineage == y0.lineage


def test_map_requires_shared_time_grid(grid):
    cfg = _sim(grid)
    noise = make_noise_bundle(cfg.u0, cfg.s, cfg.N, cfg.t_grid, seed=0)
    other = make_noise_bundle(cfg.u0, cfg.s, cfg.N, np.linspace(0, 0.25, 5), seed=0)
    y0 = zero_drift_ensemble(other, grid)
    with pytest.raises(ConfigurationError):
        picard_map(y0, noise, cfg)


def test_cfl_warning_annotation(grid):
    cfg = SimConfig(
        N=200,
        t_grid=np.linspace(0.0, 0.5, 3),  # huge dt
        s=StableParams(1.5, 1),
        kern=periodized_hilbert_pointwise(),
        u0=gaussian_bump_field(grid, amplitude=20.0),
        eps_kernel=0.01,
    )
    noise = make_noise_bundle(cfg.u0, cfg.s, cfg.N, cfg.t_grid, seed=2)
    y1 = picard_map(zero_drift_ensemble(noise, grid), noise, cfg)
    assert any("explicit-step bound" in w for w in y1.warnings)


def test_common_noise_determinism(grid):
    cfg = _sim(grid, N=300, steps=8)
    run1 = picard_processes(cfg, n_iters=3, seed=12)
    run2 = picard_processes(cfg, n_iters=3, seed=12)
    for a, b in zip(run1.ensembles, run2.ensembles):
        assert np.array_equal(a.paths, b.paths)
    assert [r.d_Tp for r in run1.reports] == [r.d_Tp for r in run2.reports]


def test_picard_zero_kernel_already_fixed(grid):
    cfg = _sim(grid, kern=zero_kernel(), N=300, steps=8)
    run = picard_processes(cfg, n_iters=2, seed=5)
    assert run.reports[0].d_Tp == 0.0


def test_picard_distances_decrease(grid):
    cfg = _sim(grid, N=600, T=0.4, steps=16, amp=2.0)
    run = picard_processes(cfg, n_iters=5, seed=11)
    d = [r.d_Tp for r in run.reports]
    assert all(d[i + 1] < d[i] for i in range(1, 4))


def test_signed_mass_constant_across_iterates(grid):
    u0 = field_from_function(grid, lambda x: np.sin(x) + 0.3)
    cfg = SimConfig(N=500, t_grid=np.linspace(0, 0.3, 9), s=StableParams(1.5, 1),
                    kern=periodized_hilbert_pointwise(), u0=u0)
    run = picard_processes(cfg, n_iters=3, seed=6)
    signed = {e.signed_mass() for e in run.ensembles}
    assert len(signed) == 1


# ---------------------------------------------------------------------------
# density estimation
# ---------------------------------------------------------------------------


def test_density_integral_equals_mass(grid):
    cfg = _sim(grid, N=2000)
    noise = make_noise_bundle(cfg.u0, cfg.s, cfg.N, cfg.t_grid, seed=8)
    ens = zero_drift_ensemble(noise, grid)
    est = density_from_ensemble(ens, float(cfg.t_grid[3]), bandwidth=0.1)
    assert mass(est) == pytest.approx(ens.mass * np.mean(ens.weights), abs=1e-8)


def test_density_initial_time_consistency(grid):
    u0 = gaussian_bump_field(grid)
    cfg = _sim(grid, N=10_000)
    noise = make_noise_bundle(u0, cfg.s, cfg.N, cfg.t_grid, seed=9)
    ens = zero_drift_ensemble(noise, grid)
    h = 0.12
    est = density_from_ensemble(ens, 0.0, bandwidth=h)
    # compare against u0 smoothed at the same bandwidth
    from fracdrift.fields import wavenumbers

    (k,) = wavenumbers(grid)
    smoothed = np.fft.ifft(np.fft.fft(u0.values) * np.exp(-0.5 * (k * h) ** 2)).real
    l1 = lp_norm(Field(grid, est.values - smoothed), 1)
    assert l1 < 4.0 * ens.mass / np.sqrt(cfg.N) + 0.05


def test_density_odd_symmetry(grid):
    # equal +/- weights at mirrored positions give an odd-symmetric estimate
    u0 = field_from_function(grid, np.sin)
    cfg = SimConfig(N=20_000, t_grid=np.linspace(0, 0.1, 3), s=StableParams(1.5, 1),
                    kern=periodized_hilbert_pointwise(), u0=u0)
    noise = make_noise_bundle(u0, cfg.s, cfg.N, cfg.t_grid, seed=10)
    ens = zero_drift_ensemble(noise, grid)
    est = density_from_ensemble(ens, 0.0, bandwidth=0.15)
    mirrored = -np.roll(est.values[::-1], 1)  # x -> -x on the torus
    assert np.max(np.abs(est.values - mirrored)) < 0.15 * np.max(np.abs(est.values)) + 0.05


def test_density_bandwidth_validation(grid):
    cfg = _sim(grid, N=100)
    noise = make_noise_bundle(cfg.u0, cfg.s, cfg.N, cfg.t_grid, seed=0)
    ens = zero_drift_ensemble(noise, grid)
    with pytest.raises(ParameterError):
        density_from_ensemble(ens, 0.0, bandwidth=0.1 * grid.spacing)
    with pytest.raises(ParameterError):
        density_from_ensemble(ens, 123.0, bandwidth=0.1)


def test_default_bandwidth_floor(grid):
    pos = np.full((50, 1), 1.0)  # degenerate cloud: MAD = 0
    assert default_bandwidth(pos, 50, grid) == grid.spacing
