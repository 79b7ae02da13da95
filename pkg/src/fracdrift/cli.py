"""Experiment orchestration.

    fracdrift decay|eta|solve|particles|compare --config run.toml --out DIR [--seed K]

Exit status: 0 when every suite-internal assertion passes, 1 when an
assertion fails (the failed invariant is named on stderr), 2 for an invalid
configuration (nothing is written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigurationError, FracdriftError
from .fields import Field, lp_norm, mass
from .initial_data import resolve_u0
from .kernels import canonical_kernel_name
from .metrics import contraction_diagnostic
from .mild import eta_estimate, local_horizon, picard_solve
from .particles import ParticleEnsemble, SimConfig, density_from_ensemble, picard_processes
from .spectral import decay_curve, theoretical_decay_slope
from .storage import (
    load_paths,
    load_trajectory,
    read_csv,
    save_paths,
    save_trajectory,
    write_csv,
    write_manifest,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fracdrift", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in ("decay", "eta", "solve", "particles", "compare"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override [run].seed")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, args.experiment, args.seed)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    runner = {
        "decay": run_decay,
        "eta": run_eta,
        "solve": run_solve,
        "particles": run_particles,
        "compare": run_compare,
    }[cfg.experiment]
    try:
        failures, extras = runner(cfg, out)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FracdriftError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1

    write_manifest(out, cfg.experiment, cfg.seed, cfg.resolved, extras)
    for failure in failures:
        print(f"assertion failed: {failure}", file=sys.stderr)
    return 1 if failures else 0


def _prepare_out(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)


# ---------------------------------------------------------------------------
# decay suite
# ---------------------------------------------------------------------------


def run_decay(cfg: RunConfig, out: Path):
    sec = cfg.section("decay")
    grid, s = cfg.grid, cfg.stable
    t_grid = np.geomspace(sec["t_min"], sec["t_max"], int(sec["points"]))
    # unit point mass at the grid center: 1/cellvol in one cell
    values = np.zeros(grid.shape)
    values[tuple(grid.n // 2 for _ in range(grid.d))] = 1.0 / grid.cell_volume
    probe = Field(grid, values)

    _prepare_out(out)
    slope_rows, curve_rows, failures = [], [], []
    for pair in sec["pairs"]:
        q, m = (_as_exp(v) for v in pair)
        for gradient in (False, True):
            curve = decay_curve(probe, q, m, s, t_grid, gradient)
            fitted = float(np.polyfit(np.log(t_grid), np.log(curve), 1)[0])
            theory = theoretical_decay_slope(q, m, s, gradient)
            rel = abs(fitted - theory) / abs(theory) if abs(theory) > 1e-12 else abs(fitted)
            slope_rows.append([_show_exp(q), _show_exp(m), int(gradient), theory, fitted, rel])
            for t, val in zip(t_grid, curve):
                curve_rows.append([_show_exp(q), _show_exp(m), int(gradient), t, val])
            if rel > sec["tolerance"]:
                failures.append(
                    f"decay slope (q={_show_exp(q)}, m={_show_exp(m)}, gradient={gradient}): "
                    f"fitted {fitted:.4f} vs theoretical {theory:.4f} exceeds "
                    f"tolerance {sec['tolerance']}"
                )
    write_csv(
        out / "decay_slopes.csv",
        ["q", "m", "gradient", "theoretical_slope", "fitted_slope", "rel_err"],
        slope_rows,
    )
    write_csv(out / "decay_curves.csv", ["q", "m", "gradient", "t", "value"], curve_rows)
    return failures, {"alpha": s.alpha, "d": grid.d}


def _as_exp(v):
    return float("inf") if v in ("inf", "Inf", "INF") else float(v)


def _show_exp(v) -> str:
    return "inf" if v == float("inf") else format(float(v), "g")


# ---------------------------------------------------------------------------
# eta suite
# ---------------------------------------------------------------------------


def run_eta(cfg: RunConfig, out: Path):
    sec = cfg.section("eta")
    est = eta_estimate(
        cfg.grid,
        cfg.kernel,
        cfg.stable,
        p=float(sec["p"]),
        T_list=sec["T_list"],
        trials=int(sec["trials"]),
        seed=cfg.seed,
        n_steps=int(sec["steps"]),
    )
    _prepare_out(out)
    write_csv(out / "eta_estimates.csv", ["T", "eta"], zip(est.T, est.eta))
    fit = {
        "fitted_exponent": est.fitted_exponent,
        "fit_residual": est.fit_residual,
        "log_intercept": est.log_intercept,
        "exponent_candidates": est.exponent_candidates,
        "matched_candidate": est.matched_candidate,
        "p": est.p,
        "alpha": est.alpha,
    }
    with open(out / "eta_fit.json", "w") as fh:
        json.dump(fit, fh, indent=2, sort_keys=True)
        fh.write("\n")
    failures = []
    if est.fit_residual > sec["residual_tolerance"]:
        failures.append(
            f"eta scaling fit residual {est.fit_residual:.4f} exceeds "
            f"{sec['residual_tolerance']}"
        )
    if sec["require_match"] and est.matched_candidate is None:
        failures.append(
            f"eta exponent {est.fitted_exponent:.4f} matches neither candidate "
            f"{est.exponent_candidates} within 0.1"
        )
    return failures, {"matched_candidate": est.matched_candidate}


# ---------------------------------------------------------------------------
# solve suite
# ---------------------------------------------------------------------------


def run_solve(cfg: RunConfig, out: Path):
    sec = cfg.section("solve")
    grid, s = cfg.grid, cfg.stable
    p = float(sec["p"])
    u0 = resolve_u0(grid, sec["u0"])
    est = eta_estimate(
        grid,
        cfg.kernel,
        s,
        p=p,
        T_list=sec["eta_T_list"],
        trials=max(16, int(sec["eta_trials"])),
        seed=cfg.seed,
    )
    horizon = local_horizon(u0, cfg.kernel, s, p, est, safety=float(sec["safety"]))
    cert = horizon.cert
    result = picard_solve(
        u0,
        cfg.kernel,
        s,
        p,
        T=float(sec["T"]),
        n_steps=int(sec["steps"]),
        n_max=int(sec["n_max"]),
        tol=float(sec["tol"]),
        relax=float(sec["relax"]),
        cert=cert,
    )
    _prepare_out(out)
    save_trajectory(out / "trajectory.fdt", result.trajectory)
    write_csv(
        out / "residuals.csv",
        ["iter", "residual"],
        [[i, r] for i, r in enumerate(result.residuals)],
    )
    cert_payload = {
        "certified": horizon.certified,
        "p": p,
        "searched_T": [float(t) for t in horizon.T_values],
        "margins": [float(m) for m in horizon.margins],
    }
    if cert is not None:
        cert_payload.update(
            {
                "T_star": cert.T_star,
                "eta": cert.eta_at_T_star,
                "R": cert.R,
                "y_norm": cert.y_norm,
                "safety_factor": cert.safety_factor,
            }
        )
    with open(out / "certificate.json", "w") as fh:
        json.dump(cert_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    failures = []
    if not result.converged:
        failures.append(
            f"picard iteration did not reach tolerance {sec['tol']} in "
            f"{sec['n_max']} iterations (last residual "
            f"{result.residuals[-1] if result.residuals else float('nan'):.3g})"
        )
    return failures, {"mass": mass(u0), "u0_lp_norm": lp_norm(u0, p), "T": float(sec["T"])}


# ---------------------------------------------------------------------------
# particles suite
# ---------------------------------------------------------------------------


def run_particles(cfg: RunConfig, out: Path):
    sec = cfg.section("particles")
    grid, s = cfg.grid, cfg.stable
    u0 = resolve_u0(grid, sec["u0"])
    t_grid = np.linspace(0.0, float(sec["T"]), int(sec["steps"]) + 1)
    kern = cfg.kernel
    sim = SimConfig(
        N=int(sec["N"]),
        t_grid=t_grid,
        s=s,
        kern=kern,
        u0=u0,
        eps_kernel=float(sec["eps_kernel"]) if sec["eps_kernel"] > 0 else None,
    )
    run = picard_processes(
        sim,
        n_iters=int(sec["n_iters"]),
        seed=cfg.seed,
        p=float(sec["p"]),
        bandwidth=float(sec["bandwidth"]) if sec["bandwidth"] > 0 else None,
        keep_ensembles=bool(sec["save_all_paths"]),
    )
    diag = None
    if run.distance_matrix.shape[0] >= 3:
        diag = contraction_diagnostic(run.horizons, run.distance_matrix, float(sec["T"]))

    _prepare_out(out)
    final = run.ensembles[-1]
    save_paths(out / "paths.fdp", final.t_grid, final.paths)
    if sec["save_all_paths"]:
        for i, ens in enumerate(run.ensembles[:-1]):
            save_paths(out / f"paths_iter{i}.fdp", ens.t_grid, ens.paths)
    write_csv(
        out / "weights.csv",
        ["index", "weight"],
        [[i, w] for i, w in enumerate(final.weights)],
    )
    rows = []
    for n in range(run.distance_matrix.shape[0]):
        c_hat = diag.C_hats[n - 1] if diag is not None and n >= 1 else float("nan")
        for j, t in enumerate(run.horizons):
            rows.append(
                [
                    n,
                    t,
                    run.rho_matrix[n, j],
                    run.lp_matrix[n, j],
                    run.distance_matrix[n, j],
                    c_hat,
                ]
            )
    write_csv(
        out / "distances.csv",
        ["iter", "t_horizon", "rho", "lp_density", "d_Tp", "C_hat"],
        rows,
    )
    payload = {
        "C_hats": [float(c) for c in diag.C_hats] if diag else [],
        "fitted_C": diag.fitted_C if diag else None,
        "shape_residual": diag.shape_residual if diag else None,
        "factorial_consistent": diag.factorial_consistent if diag else None,
        "ratios": [float(r) for r in diag.ratios] if diag else [],
        "monotone_time": diag.monotone_time if diag else None,
    }
    with open(out / "contraction.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    failures = []
    d_seq = [r.d_Tp for r in run.reports]
    if sec["require_contraction"]:
        decreasing = all(d_seq[i + 1] < d_seq[i] for i in range(1, len(d_seq) - 1))
        if not decreasing:
            failures.append(
                "successive iterate distances are not strictly decreasing after "
                f"iteration 1: {['%.3e' % d for d in d_seq]}"
            )
        if diag is not None and not np.all(np.isfinite(diag.C_hats)):
            failures.append("per-step contraction constants are not all finite")
    extras = {
        "mass": final.mass,
        "eps_kernel": sim.eps_kernel,
        "signed_mass": final.signed_mass(),
        "warnings": run.warnings,
        "d_sequence": d_seq,
        "factorial_consistent": payload["factorial_consistent"],
    }
    return failures, extras


# ---------------------------------------------------------------------------
# compare suite: PDE trajectory vs particle KDE
# ---------------------------------------------------------------------------


def _load_manifest(run_dir: Path) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise ConfigurationError(f"no manifest at {path}; run the suite first")
    with open(path) as fh:
        return json.load(fh)


_MATCH_KEYS = ("alpha", "kernel", "u0", "T", "grid")


def _physical_signature(manifest: dict) -> dict:
    conf = manifest["config"]
    suite = manifest["experiment"]
    section = conf[suite]
    return {
        "alpha": conf["stable"]["alpha"],
        "kernel": canonical_kernel_name(conf["kernel"]["name"]),
        "u0": section["u0"],
        "T": section["T"],
        "grid": conf["grid"],
    }


def run_compare(cfg: RunConfig, out: Path):
    sec = cfg.section("compare")
    solve_dir = Path(sec["solve_run"])
    solve_manifest = _load_manifest(solve_dir)
    if solve_manifest["experiment"] != "solve":
        raise ConfigurationError(f"{solve_dir} is not a solve run")
    reference = _physical_signature(solve_manifest)

    particle_runs = []
    for run_dir in sec["particle_runs"]:
        m = _load_manifest(Path(run_dir))
        if m["experiment"] != "particles":
            raise ConfigurationError(f"{run_dir} is not a particles run")
        sig = _physical_signature(m)
        differing = [k for k in _MATCH_KEYS if sig[k] != reference[k]]
        if differing:
            raise ConfigurationError(
                f"refusing to compare {run_dir}: differing keys {differing}"
            )
        particle_runs.append((Path(run_dir), m))
    particle_runs.sort(key=lambda item: item[1]["config"]["particles"]["N"])

    traj = load_trajectory(solve_dir / "trajectory.fdt")
    grid = traj.grid

    _prepare_out(out)
    time_rows, final_rows = [], []
    density_columns = {}
    for run_dir, m in particle_runs:
        t_grid, paths = load_paths(run_dir / "paths.fdp")
        _, weight_rows = read_csv(run_dir / "weights.csv")
        weights = np.array([float(r["weight"]) for r in weight_rows])
        ens = ParticleEnsemble(
            grid=grid,
            t_grid=t_grid,
            paths=paths,
            weights=weights,
            mass=float(m["extras"]["mass"]),
            lineage=f"loaded:{run_dir.name}",
        )
        N = ens.N
        from .particles import default_bandwidth

        bw = default_bandwidth(ens.paths[:, 0, :], N, grid)
        l1_final = l2_final = 0.0
        for t in t_grid:
            kde = density_from_ensemble(ens, float(t), bw)
            pde_vals = _interp_trajectory(traj, float(t))
            diff = Field(grid, kde.values - pde_vals)
            l1, l2 = lp_norm(diff, 1), lp_norm(diff, 2)
            time_rows.append([N, t, l1, l2])
            l1_final, l2_final = l1, l2
        final_rows.append([N, l1_final, l2_final])
        density_columns[N] = density_from_ensemble(ens, float(t_grid[-1]), bw).values

    write_csv(out / "compare_times.csv", ["N", "t", "l1", "l2"], time_rows)
    write_csv(out / "compare_final.csv", ["N", "l1_final", "l2_final"], final_rows)
    ns = sorted(density_columns)
    header = ["x", "pde"] + [f"kde_{n}" for n in ns]
    final_pde = traj.frames[-1]
    rows = []
    for i, x in enumerate(grid.axis_coords()):
        rows.append([x, final_pde[i]] + [density_columns[n][i] for n in ns])
    write_csv(out / "density_final.csv", header, rows)

    failures = []
    if sec["require_monotone"]:
        l1s = [row[1] for row in final_rows]
        if not all(l1s[i + 1] < l1s[i] for i in range(len(l1s) - 1)):
            failures.append(
                "final-time L1 distance is not strictly decreasing over the N sweep: "
                + ", ".join(f"N={r[0]}: {r[1]:.4g}" for r in final_rows)
            )
    return failures, {"N_values": ns}


def _interp_trajectory(traj, t: float) -> np.ndarray:
    tg = traj.t_grid
    if t <= tg[0]:
        return traj.frames[0]
    if t >= tg[-1]:
        return traj.frames[-1]
    idx = int(np.searchsorted(tg, t))
    th = (t - tg[idx - 1]) / (tg[idx] - tg[idx - 1])
    return (1 - th) * traj.frames[idx - 1] + th * traj.frames[idx]


if __name__ == "__main__":
    sys.exit(main())
