"""Synthesized run artifacts matching the documented schemas.

The plotting package consumes the solver only through its file formats, so
fixtures build manifests and CSV/JSON artifacts directly.
"""

import csv
import hashlib
import json
import math

import numpy as np
import pytest


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _manifest(out_dir, experiment, config):
    artifacts = []
    for p in sorted(out_dir.iterdir()):
        if p.name == "manifest.json" or not p.is_file():
            continue
        artifacts.append(
            {
                "name": p.name,
                "sha256": hashlib.sha256(p.read_bytes()).hexdigest(),
                "bytes": p.stat().st_size,
            }
        )
    manifest = {
        "schema_version": 1,
        "experiment": experiment,
        "seed": 0,
        "config": config,
        "artifacts": artifacts,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


BASE_CONFIG = {
    "grid": {"d": 1, "n": 256, "L": 6.283185307179586},
    "stable": {"alpha": 1.5},
    "kernel": {"name": "hilbert"},
    "eta": {"p": 3.0},
}


@pytest.fixture
def decay_run(tmp_path):
    out = tmp_path / "decay"
    out.mkdir()
    t = np.geomspace(0.25, 3.5, 8)
    rows_curves, rows_slopes = [], []
    for q, m, g, slope in ((1.0, 2.0, 0, -1 / 3), (1.0, 2.0, 1, -1.0)):
        vals = 0.8 * t**slope
        rows_curves += [[q, "inf" if np.isinf(m) else m, g, ti, vi] for ti, vi in zip(t, vals)]
        rows_slopes.append([q, m, g, slope, slope * 1.01, 0.01])
    _write_csv(out / "decay_curves.csv", ["q", "m", "gradient", "t", "value"], rows_curves)
    _write_csv(
        out / "decay_slopes.csv",
        ["q", "m", "gradient", "theoretical_slope", "fitted_slope", "rel_err"],
        rows_slopes,
    )
    return _manifest(out, "decay", BASE_CONFIG)


@pytest.fixture
def eta_run(tmp_path):
    out = tmp_path / "eta"
    out.mkdir()
    T = np.array([0.05, 0.1, 0.2, 0.4, 0.8])
    eta = 0.4 * T**0.12
    _write_csv(out / "eta_estimates.csv", ["T", "eta"], list(zip(T, eta)))
    (out / "eta_fit.json").write_text(json.dumps({"fitted_exponent": 0.12}))
    return _manifest(out, "eta", BASE_CONFIG)


@pytest.fixture
def solve_run(tmp_path):
    out = tmp_path / "solve"
    out.mkdir()
    residuals = [8e-3 * 0.07**i for i in range(7)]
    _write_csv(out / "residuals.csv", ["iter", "residual"], list(enumerate(residuals)))
    (out / "certificate.json").write_text(
        json.dumps(
            {"certified": True, "T_star": 0.8, "R": 0.39, "y_norm": 0.3, "eta": 0.58}
        )
    )
    (out / "trajectory.fdt").write_bytes(b"FDT1" + b"\x00" * 16)
    return _manifest(out, "solve", BASE_CONFIG)


@pytest.fixture
def particles_run(tmp_path):
    out = tmp_path / "particles"
    out.mkdir()
    horizons = np.linspace(0.125, 0.5, 4)
    rows = []
    C = 1.3
    for n in range(8):
        d_T = 0.9 * C**n / math.factorial(n)
        for t in horizons:
            frac = t / horizons[-1]
            rows.append([n, t, 0.6 * d_T * frac, d_T * frac, d_T * frac, C if n else "nan"])
    _write_csv(
        out / "distances.csv",
        ["iter", "t_horizon", "rho", "lp_density", "d_Tp", "C_hat"],
        rows,
    )
    (out / "contraction.json").write_text(
        json.dumps(
            {
                "fitted_C": C,
                "shape_residual": 0.01,
                "factorial_consistent": True,
                "C_hats": [C] * 7,
            }
        )
    )
    (out / "weights.csv").write_text("index,weight\n0,1.0\n")
    (out / "paths.fdp").write_bytes(b"FDP1" + b"\x00" * 16)
    return _manifest(out, "particles", BASE_CONFIG)


@pytest.fixture
def compare_run(tmp_path):
    out = tmp_path / "compare"
    out.mkdir()
    x = np.linspace(0, 6.28, 64, endpoint=False)
    pde = np.exp(-((x - 3.14) ** 2))
    rows = [
        [xi, pi, pi * 1.05, pi * 1.01] for xi, pi in zip(x, pde)
    ]
    _write_csv(out / "density_final.csv", ["x", "pde", "kde_1000", "kde_10000"], rows)
    _write_csv(
        out / "compare_final.csv",
        ["N", "l1_final", "l2_final"],
        [[1000, 0.13, 0.08], [10000, 0.06, 0.04], [30000, 0.03, 0.02]],
    )
    _write_csv(
        out / "compare_times.csv",
        ["N", "t", "l1", "l2"],
        [[1000, 0.1, 0.1, 0.06], [1000, 0.2, 0.12, 0.07]],
    )
    return _manifest(out, "compare", BASE_CONFIG)
