import numpy as np
import pytest

from fracdrift import (
    Field,
    GridSpec,
    StableParams,
    field_from_function,
    lp_norm,
)
from fracdrift.errors import ConfigurationError, DivergenceError, ParameterError
from fracdrift.fields import mass
from fracdrift.kernels import hilbert_kernel, riesz_kernel, zero_kernel
from fracdrift.mild import (
    EtaEstimate,
    FieldTrajectory,
    TestFunction,
    constant_test_function,
    duhamel_bilinear,
    eta_estimate,
    free_evolution,
    local_horizon,
    picard_solve,
    random_test_function,
    traj_norm,
    weak_residual,
)

from conftest import gaussian_bump_field


# ---------------------------------------------------------------------------
# trajectories and norms
# ---------------------------------------------------------------------------


def test_trajectory_validation(grid):
    with pytest.raises(ConfigurationError):
        FieldTrajectory(grid, np.array([0.1, 0.2]), np.zeros((2, grid.n)))
    with pytest.raises(ConfigurationError):
        FieldTrajectory(grid, np.array([0.0, 0.0]), np.zeros((2, grid.n)))
    with pytest.raises(ConfigurationError):
        FieldTrajectory(grid, np.array([0.0, 0.1]), np.zeros((3, grid.n)))


def test_traj_norm_zero(grid):
    u = FieldTrajectory(grid, np.array([0.0, 0.5]), np.zeros((2, grid.n)))
    assert traj_norm(u, 3) == 0.0


def test_traj_norm_single_frame(grid):
    f = field_from_function(grid, np.sin)
    scale = 2.5 / lp_norm(f, 2)
    u = FieldTrajectory(grid, np.array([0.0]), (scale * f.values)[None, :])
    assert traj_norm(u, 2) == pytest.approx(2.5)


def test_traj_norm_supremum(grid):
    f = field_from_function(grid, np.sin)
    f1 = f.values * (1.0 / lp_norm(f, 2))
    frames = np.stack([f1, 3.0 * f1])
    u = FieldTrajectory(grid, np.array([0.0, 1.0]), frames)
    assert traj_norm(u, 2) == pytest.approx(3.0)


# ---------------------------------------------------------------------------
# the bilinear integral
# ---------------------------------------------------------------------------


def _decaying_sin_trajectory(grid, T=0.5, nt=65):
    t_grid = np.linspace(0.0, T, nt)
    x = grid.axis_coords()
    frames = np.exp(-t_grid)[:, None] * np.sin(x)[None, :]
    return FieldTrajectory(grid, t_grid, frames)


def test_bilinear_single_mode_oracle(grid, stable):
    # u_s = v_s = e^{-s} sin x with the Hilbert drift:
    # B(v) = -e^{-s} cos x, product = -e^{-2s} sin(2x)/2, and the gradient
    # propagator acts mode-wise, giving the closed form
    #   -cos(2x) (e^{-2t} - e^{-2^a t}) / (2^a - 2).
    u = _decaying_sin_trajectory(grid)
    out = duhamel_bilinear(u, u, hilbert_kernel(), stable)
    a = 2.0**stable.alpha
    x = grid.axis_coords()
    for i in (16, 32, 64):
        t = u.t_grid[i]
        exact = -np.cos(2 * x) * (np.exp(-2 * t) - np.exp(-a * t)) / (a - 2.0)
        assert np.max(np.abs(out.frames[i] - exact)) < 1e-5


def test_bilinear_zero_slots(grid, stable):
    u = _decaying_sin_trajectory(grid)
    z = FieldTrajectory(grid, u.t_grid, np.zeros_like(u.frames))
    assert traj_norm(duhamel_bilinear(z, u, hilbert_kernel(), stable), 3) == 0.0
    assert traj_norm(duhamel_bilinear(u, z, hilbert_kernel(), stable), 3) == 0.0


def test_bilinear_t0_frame_zero(grid, stable):
    u = _decaying_sin_trajectory(grid)
    out = duhamel_bilinear(u, u, hilbert_kernel(), stable)
    assert np.max(np.abs(out.frames[0])) == 0.0


def test_bilinearity(grid, stable):
    u = _decaying_sin_trajectory(grid, nt=17)
    v = FieldTrajectory(grid, u.t_grid, np.cos(grid.axis_coords())[None, :] * np.ones((17, 1)))
    b1 = duhamel_bilinear(u, v, hilbert_kernel(), stable)
    b2 = duhamel_bilinear(FieldTrajectory(grid, u.t_grid, 2.5 * u.frames), v, hilbert_kernel(), stable)
    assert np.max(np.abs(b2.frames - 2.5 * b1.frames)) < 1e-10
    w = FieldTrajectory(grid, u.t_grid, u.frames + v.frames)
    b3 = duhamel_bilinear(w, v, hilbert_kernel(), stable)
    b4 = duhamel_bilinear(v, v, hilbert_kernel(), stable)
    assert np.max(np.abs(b3.frames - (b1.frames + b4.frames))) < 1e-10


def test_bilinear_rejects_mismatched_grids(stable):
    g1, g2 = GridSpec(1, 256, 2 * np.pi), GridSpec(1, 128, 2 * np.pi)
    u1 = _decaying_sin_trajectory(g1, nt=9)
    u2 = _decaying_sin_trajectory(g2, nt=9)
    with pytest.raises(ConfigurationError):
        duhamel_bilinear(u1, u2, hilbert_kernel(), stable)
    with pytest.raises(ParameterError):
        duhamel_bilinear(u1, u1, hilbert_kernel(), StableParams(2.0, 1))


def test_bilinear_2d_riesz_pair_runs():
    g = GridSpec(2, 16, 2 * np.pi)
    s = StableParams(1.5, 2)
    t_grid = np.linspace(0.0, 0.2, 5)
    f = gaussian_bump_field(g, width=1.0).values
    u = FieldTrajectory(g, t_grid, np.broadcast_to(f, (5, *g.shape)))
    pair = (riesz_kernel(1), riesz_kernel(2))
    out = duhamel_bilinear(u, u, pair, s, n_quad=8)
    assert np.all(np.isfinite(out.frames))
    # divergence-form drift has zero spatial mean on the torus
    assert np.max(np.abs(out.frames.mean(axis=(1, 2)))) < 1e-12


# ---------------------------------------------------------------------------
# the empirical bilinear bound
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def eta_est():
    grid = GridSpec(1, 256, 2 * np.pi)
    return eta_estimate(
        grid, hilbert_kernel(), StableParams(1.5, 1), p=3.0,
        T_list=[0.1, 0.2, 0.4, 0.8], trials=16, seed=0, n_steps=32,
    )


def test_eta_nonnegative_nondecreasing(eta_est):
    assert np.all(eta_est.eta >= 0)
    assert np.all(np.diff(eta_est.eta) >= 0)


def test_eta_doubling_model():
    # predicted ratio under the stated horizon scaling at alpha = 3/2
    est = EtaEstimate(
        T=np.array([0.1, 0.2]), eta=np.array([1.0, 1.0]), fitted_exponent=0.0,
        fit_residual=0.0, log_intercept=0.0, exponent_candidates={}, matched_candidate=None,
        p=3.0, alpha=1.5,
    )
    assert est.predicted_ratio(2.0, exponent=1 - 1 / 1.5) == pytest.approx(2 ** (1 / 3))
    assert est.predicted_ratio(2.0, exponent=1 - 1 / 1.5) == pytest.approx(1.2599, abs=1e-3)


def test_eta_validation(grid, stable):
    with pytest.raises(ParameterError):
        eta_estimate(grid, hilbert_kernel(), stable, p=1.5, T_list=[0.1, 0.2], trials=16)
    with pytest.raises(ParameterError):
        eta_estimate(grid, hilbert_kernel(), stable, p=3.0, T_list=[0.1, 0.2], trials=4)
    # p <= d/(alpha - 1) rejected
    with pytest.raises(ParameterError):
        eta_estimate(grid, hilbert_kernel(), StableParams(1.2, 1), p=3.0, T_list=[0.1, 0.2], trials=16)


# ---------------------------------------------------------------------------
# certified horizon
# ---------------------------------------------------------------------------


def _flat_eta_model(value: float) -> EtaEstimate:
    return EtaEstimate(
        T=np.array([0.25, 0.5, 1.0]), eta=np.full(3, value),
        fitted_exponent=0.0, fit_residual=0.0, log_intercept=float(np.log(value)),
        exponent_candidates={}, matched_candidate=None, p=3.0, alpha=1.5,
    )


def test_ball_radius_worked_example(grid, stable):
    # eta = 1, |y| = 3/16: R = (1 - sqrt(1 - 3/4)) / 2 = 1/4
    f = gaussian_bump_field(grid)
    u0 = f * (3.0 / 16.0 / lp_norm(f, 3))
    res = local_horizon(u0, hilbert_kernel(), stable, 3.0, _flat_eta_model(1.0), safety=1.0)
    assert res.certified
    assert res.cert.R == pytest.approx(0.25, rel=1e-10)
    assert res.cert.y_norm == pytest.approx(3.0 / 16.0)


def test_zero_initial_data_certifies_everything(grid, stable):
    u0 = Field(grid, np.zeros(grid.shape))
    res = local_horizon(u0, hilbert_kernel(), stable, 3.0, _flat_eta_model(1.0))
    assert res.certified
    assert res.cert.R == 0.0
    assert res.cert.T_star == pytest.approx(1.0)


def test_no_certified_horizon_is_a_result_not_an_exception(grid, stable):
    f = gaussian_bump_field(grid)
    u0 = f * (100.0 / lp_norm(f, 3))
    res = local_horizon(u0, hilbert_kernel(), stable, 3.0, _flat_eta_model(1.0))
    assert not res.certified
    assert res.cert is None
    assert np.all(res.margins >= 1.0)


def test_local_horizon_needs_p_above_2(grid, stable):
    with pytest.raises(ParameterError):
        local_horizon(gaussian_bump_field(grid), hilbert_kernel(), stable, 2.0, _flat_eta_model(1.0))


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------


def test_picard_zero_data(grid, stable):
    u0 = Field(grid, np.zeros(grid.shape))
    res = picard_solve(u0, hilbert_kernel(), stable, 3.0, T=0.2, n_steps=8, tol=1e-12)
    assert res.converged
    assert traj_norm(res.trajectory, 3) == 0.0


def test_picard_zero_kernel_is_pure_heat(grid, stable):
    u0 = gaussian_bump_field(grid, amplitude=0.5)
    res = picard_solve(u0, zero_kernel(), stable, 3.0, T=0.3, n_steps=16, tol=1e-12)
    exact = free_evolution(u0, stable, res.trajectory.t_grid)
    assert res.converged
    assert np.max(np.abs(res.trajectory.frames - exact.frames)) < 1e-12


def test_picard_contraction_and_ball(grid, stable):
    f = gaussian_bump_field(grid)
    u0 = f * (0.3 / lp_norm(f, 3))
    res = picard_solve(u0, hilbert_kernel(), stable, 3.0, T=0.5, n_steps=32, tol=1e-10)
    assert res.converged
    ratios = [res.residuals[i + 1] / res.residuals[i] for i in range(len(res.residuals) - 1)]
    assert all(r < 1.0 for r in ratios[1:])
    assert traj_norm(res.trajectory, 3) <= 2.0 * res.free_norm + 1e-6


def test_picard_mass_conservation(grid, stable):
    u0 = gaussian_bump_field(grid, amplitude=0.4)
    res = picard_solve(u0, hilbert_kernel(), stable, 3.0, T=0.4, n_steps=32, tol=1e-10)
    m0 = mass(u0)
    for i in range(0, res.trajectory.t_grid.size, 8):
        assert mass(res.trajectory.field(i)) == pytest.approx(m0, abs=1e-8)


def test_picard_divergence_error(grid, stable):
    f = gaussian_bump_field(grid)
    u0 = f * (60.0 / lp_norm(f, 3))
    with pytest.raises(DivergenceError, match="contraction-ball bound"):
        picard_solve(u0, hilbert_kernel(), stable, 3.0, T=1.0, n_steps=24, n_max=40)


def test_picard_warns_beyond_certificate(grid, stable):
    f = gaussian_bump_field(grid)
    u0 = f * (0.2 / lp_norm(f, 3))
    res = local_horizon(u0, hilbert_kernel(), stable, 3.0, _flat_eta_model(0.5), safety=1.0)
    with pytest.warns(UserWarning, match="certified"):
        picard_solve(u0, hilbert_kernel(), stable, 3.0, T=res.cert.T_star * 1.5,
                     n_steps=8, n_max=3, tol=1e-3, cert=res.cert)


def test_picard_time_refinement(grid, stable):
    f = gaussian_bump_field(grid)
    u0 = f * (0.3 / lp_norm(f, 3))
    finals = {}
    for steps in (16, 32, 64, 128):
        res = picard_solve(u0, hilbert_kernel(), stable, 3.0, T=0.4, n_steps=steps, tol=1e-11)
        finals[steps] = res.trajectory.frames[-1]
    d1 = lp_norm(Field(grid, finals[32] - finals[16]), 2)
    d2 = lp_norm(Field(grid, finals[64] - finals[32]), 2)
    d3 = lp_norm(Field(grid, finals[128] - finals[64]), 2)
    assert d1 > d2 > d3


# ---------------------------------------------------------------------------
# weak-form residual
# ---------------------------------------------------------------------------


def test_test_function_degree_cap():
    with pytest.raises(ParameterError):
        TestFunction(modes=((1,),), amplitudes=(1.0,), chi_coeffs=(1, 1, 1, 1, 1, 1))


def test_weak_residual_constant_psi_is_mass_defect(grid, stable):
    u0 = gaussian_bump_field(grid, amplitude=0.4)
    res = picard_solve(u0, hilbert_kernel(), stable, 3.0, T=0.3, n_steps=32, tol=1e-10)
    r = weak_residual(res.trajectory, hilbert_kernel(), stable, [constant_test_function()])
    assert r[0] < 1e-8


def test_weak_residual_pure_heat_quadrature_floor(grid, stable):
    # zero kernel: the solver output is the exact spectral flow, so the
    # residual is the trapezoid quadrature error only
    u0 = gaussian_bump_field(grid, amplitude=0.5)
    res = picard_solve(u0, zero_kernel(), stable, 3.0, T=0.1, n_steps=64, tol=1e-12)
    rng = np.random.default_rng(8)
    psis = [random_test_function(grid, rng, max_mode=3, max_degree=2) for _ in range(5)]
    r = weak_residual(res.trajectory, zero_kernel(), stable, psis)
    assert np.max(r) < 1e-6


def test_weak_residual_solution_close_to_baseline(grid, stable):
    f = gaussian_bump_field(grid)
    u0 = f * (0.3 / lp_norm(f, 3))
    rng = np.random.default_rng(42)
    psis = [random_test_function(grid, rng) for _ in range(5)]
    sol = picard_solve(u0, hilbert_kernel(), stable, 3.0, T=0.4, n_steps=64, tol=1e-10)
    base = picard_solve(u0, zero_kernel(), stable, 3.0, T=0.4, n_steps=64, tol=1e-10)
    r_sol = weak_residual(sol.trajectory, hilbert_kernel(), stable, psis)
    r_base = weak_residual(base.trajectory, zero_kernel(), stable, psis)
    assert np.all(r_sol < 10.0 * np.maximum(r_base, 1e-12))


def test_weak_residual_grid_mismatch(grid, stable):
    other = GridSpec(1, 128, 2 * np.pi)
    u = FieldTrajectory(other, np.array([0.0, 0.1]), np.zeros((2, other.n)))
    # psi built for a different grid still evaluates (modes are relative), so
    # mismatch surfaces through the trajectory itself; check traj validation
    with pytest.raises(ConfigurationError):
        FieldTrajectory(grid, np.array([0.0, 0.1]), np.zeros((2, other.n)))
    assert u.grid == other
