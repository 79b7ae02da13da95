"""One figure per suite, every curve and reference line computed from the
artifacts and the echoed configuration, nothing hard-coded."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .artifacts import SchemaError, artifact_path, load_columns, load_json_artifact

RC = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "svg.hashsalt": "fracdrift-plots",
}


def _fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def decay_scaling(manifest: dict, base: Path):
    """Log-log smoothing curves with fitted and theoretical slopes per case."""
    cols = load_columns(
        artifact_path(manifest, base, "decay_curves.csv"),
        ["q", "m", "gradient", "t", "value"],
    )
    alpha = float(manifest["config"]["stable"]["alpha"])
    d = int(manifest["config"]["grid"]["d"])
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        keys = sorted(
            {(q, m, g) for q, m, g in zip(cols["q"], cols["m"], cols["gradient"])},
            key=lambda k: (k[0], k[1] if np.isfinite(k[1]) else 1e9, k[2]),
        )
        for q, m, g in keys:
            sel = (cols["q"] == q) & (cols["m"] == m) & (cols["gradient"] == g)
            t, v = cols["t"][sel], cols["value"][sel]
            order = np.argsort(t)
            t, v = t[order], v[order]
            fitted = _fit_slope(t, v)
            inv_q = 0.0 if np.isinf(q) else 1.0 / q
            inv_m = 0.0 if np.isinf(m) else 1.0 / m
            theory = -(d / alpha) * (inv_q - inv_m) - (1.0 / alpha if g else 0.0)
            label = (
                f"q={q:g}, m={'inf' if np.isinf(m) else '%g' % m}"
                f"{', grad' if g else ''}: fit {fitted:.3f}, theory {theory:.3f}"
            )
            (line,) = ax.loglog(t, v, marker="o", markersize=3, label=label)
            ref = v[0] * (t / t[0]) ** theory
            ax.loglog(t, ref, linestyle="--", linewidth=0.8, color=line.get_color())
        ax.set_xlabel("t")
        ax.set_ylabel("smoothing ratio")
        ax.set_title(f"propagator smoothing rates (alpha={alpha:g}, d={d})")
        ax.legend(loc="best")
        fig.tight_layout()
    return fig


def eta_scaling(manifest: dict, base: Path):
    """Measured bilinear bound vs horizon with both candidate slopes."""
    cols = load_columns(artifact_path(manifest, base, "eta_estimates.csv"), ["T", "eta"])
    alpha = float(manifest["config"]["stable"]["alpha"])
    d = int(manifest["config"]["grid"]["d"])
    p = float(manifest["config"]["eta"]["p"])
    T, eta = cols["T"], cols["eta"]
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.loglog(T, eta, marker="o", color="k", label="measured eta(T)")
        if np.all(eta > 0):
            slope, intercept = np.polyfit(np.log(T), np.log(eta), 1)
            ax.loglog(T, np.exp(intercept) * T**slope, "k--", linewidth=0.9,
                      label=f"fit: slope {slope:.3f}")
        stated = 1.0 - 1.0 / alpha
        integrated = stated - d / (alpha * p)
        for name, expo, style in (
            ("stated horizon scaling", stated, ":"),
            ("integrated smoothing", integrated, "-."),
        ):
            ref = eta[0] * (T / T[0]) ** expo
            ax.loglog(T, ref, style, linewidth=0.9, label=f"{name}: slope {expo:.3f}")
        ax.set_xlabel("horizon T")
        ax.set_ylabel("eta(T)")
        ax.set_title(f"bilinear bound scaling (alpha={alpha:g}, p={p:g})")
        ax.legend(loc="best")
        fig.tight_layout()
    return fig


def picard_residuals(manifest: dict, base: Path):
    """Solver residual history with the certificate in the title."""
    cols = load_columns(artifact_path(manifest, base, "residuals.csv"), ["iter", "residual"])
    cert = load_json_artifact(artifact_path(manifest, base, "certificate.json"), ["certified"])
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.semilogy(cols["iter"], cols["residual"], marker="o", color="k")
        ax.set_xlabel("iteration")
        ax.set_ylabel("successive-iterate norm")
        if cert.get("certified") and "T_star" in cert:
            ax.set_title(
                f"fixed-point residuals (T*={cert['T_star']:g}, R={cert['R']:.3g}, "
                f"|y|={cert['y_norm']:.3g})"
            )
        else:
            ax.set_title("fixed-point residuals (no certified horizon)")
        fig.tight_layout()
    return fig


def contraction(manifest: dict, base: Path):
    """Iteration distances at the full horizon with the C^n/n! overlay."""
    cols = load_columns(
        artifact_path(manifest, base, "distances.csv"),
        ["iter", "t_horizon", "rho", "lp_density", "d_Tp", "C_hat"],
    )
    diag = load_json_artifact(artifact_path(manifest, base, "contraction.json"), ["fitted_C"])
    t_max = np.max(cols["t_horizon"])
    sel = cols["t_horizon"] == t_max
    iters = cols["iter"][sel].astype(int)
    order = np.argsort(iters)
    iters, d = iters[order], cols["d_Tp"][sel][order]
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.semilogy(iters, d, marker="o", color="k", label="d(Y^n, Y^{n+1})")
        c = diag.get("fitted_C")
        if c is not None and len(iters) > 1 and d[1] > 0:
            overlay = [
                d[1] * c ** (n - 1) * math.factorial(1) / math.factorial(n)
                for n in iters[1:]
            ]
            ax.semilogy(iters[1:], overlay, "--", color="tab:red",
                        label=f"C^n/n! overlay, fitted C={c:.3g}")
        ax.set_xlabel("iteration n")
        ax.set_ylabel("combined distance at T")
        ax.set_title("measure-map contraction")
        ax.legend(loc="best")
        fig.tight_layout()
    return fig


def density_overlay(manifest: dict, base: Path):
    """Final-time solver density against the particle estimates."""
    path = artifact_path(manifest, base, "density_final.csv")
    cols = load_columns(path, ["x", "pde"])
    kde_cols = [c for c in cols if c.startswith("kde_")]
    if not kde_cols:
        raise SchemaError(f"{path.name}: missing column 'kde_<N>'")
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(cols["x"], cols["pde"], color="k", linewidth=1.5, label="pde solution")
        for c in sorted(kde_cols, key=lambda name: int(name.split("_")[1])):
            ax.plot(cols["x"], cols[c], linewidth=0.9, label=f"particles N={c.split('_')[1]}")
        ax.set_xlabel("x")
        ax.set_ylabel("density at final time")
        ax.set_title("cross-route densities")
        ax.legend(loc="best")
        fig.tight_layout()
    return fig


def n_convergence(manifest: dict, base: Path):
    """Final-time route discrepancy against the particle count."""
    cols = load_columns(
        artifact_path(manifest, base, "compare_final.csv"), ["N", "l1_final", "l2_final"]
    )
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.loglog(cols["N"], cols["l1_final"], marker="o", label="L1")
        ax.loglog(cols["N"], cols["l2_final"], marker="s", label="L2")
        ax.set_xlabel("particle count N")
        ax.set_ylabel("final-time distance")
        ax.set_title("cross-route convergence in N")
        ax.legend(loc="best")
        fig.tight_layout()
    return fig


FIGURES = {
    "decay": {"decay_scaling": decay_scaling},
    "eta": {"eta_scaling": eta_scaling},
    "solve": {"picard_residuals": picard_residuals},
    "particles": {"contraction": contraction},
    "compare": {"density_overlay": density_overlay, "n_convergence": n_convergence},
}
