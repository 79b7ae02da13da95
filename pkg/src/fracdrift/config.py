"""Run-configuration parsing: one TOML file, sections per module, every field
validated before any computation, and the fully resolved config (defaults
included) echoed into the run manifest."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigurationError
from .fields import GridSpec
from .kernels import CZKernel, kernel_from_name
from .spectral import StableParams

EXPERIMENTS = ("decay", "eta", "solve", "particles", "compare")

_DEFAULTS = {
    "run": {"seed": 0},
    "grid": {"d": 1, "n": 256, "L": float(2.0 * np.pi)},
    "stable": {"alpha": 1.5},
    "kernel": {"name": "hilbert"},
    "decay": {
        "pairs": [[1.0, 2.0], [1.0, "inf"], [2.0, 4.0]],
        "t_min": 0.25,
        "t_max": 3.5,
        "points": 12,
        "tolerance": 0.10,
    },
    "eta": {
        "T_list": [0.05, 0.1, 0.2, 0.4, 0.8],
        "trials": 24,
        "p": 3.0,
        "steps": 48,
        "residual_tolerance": 0.05,
        "require_match": True,
    },
    "solve": {
        "p": 3.0,
        "T": 0.5,
        "steps": 64,
        "tol": 1e-9,
        "n_max": 25,
        "safety": 1.5,
        "relax": 0.0,
        "u0": {"preset": "gaussian_bump", "width": 0.5, "amplitude": 0.5},
        "eta_trials": 16,
        "eta_T_list": [0.05, 0.1, 0.2, 0.4, 0.8],
    },
    "particles": {
        "N": 5000,
        "T": 0.5,
        "steps": 40,
        "p": 2.0,
        "n_iters": 8,
        "u0": {"preset": "gaussian_bump", "width": 0.5, "amplitude": 6.0},
        "eps_kernel": 0.0,  # 0 = automatic L * N^{-1/(d+2)}
        "bandwidth": 0.0,  # 0 = automatic MAD rule
        "require_contraction": True,
        "save_all_paths": False,
    },
    "compare": {
        "solve_run": "",
        "particle_runs": [],
        "require_monotone": True,
    },
}


@dataclass
class RunConfig:
    experiment: str
    seed: int
    grid: GridSpec
    stable: StableParams
    kernel: CZKernel
    resolved: dict  # full config echo, defaults included

    def section(self, name: str) -> dict:
        return self.resolved[name]


def _line_of(text: str, key: str) -> str:
    for i, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"\s*{re.escape(key)}\s*=", line) or re.match(
            rf"\s*\[{re.escape(key)}\]", line
        ):
            return f" (line {i})"
    return ""


def load_config(path, experiment: str, seed_override: int | None = None) -> RunConfig:
    """Parse and validate; raises ConfigurationError with a line reference."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid TOML: {exc}") from exc

    def fail(key: str, msg: str):
        raise ConfigurationError(f"{path}{_line_of(text, key.split('.')[-1])}: {key}: {msg}")

    if experiment not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}; one of {EXPERIMENTS}")
    declared = raw.get("run", {}).get("experiment")
    if declared is not None and declared != experiment:
        fail("run.experiment", f"config declares {declared!r} but {experiment!r} was requested")

    resolved = {}
    for section, defaults in _DEFAULTS.items():
        merged = dict(defaults)
        user = raw.get(section, {})
        if not isinstance(user, dict):
            fail(section, "must be a table")
        unknown = set(user) - set(defaults) - ({"experiment"} if section == "run" else set())
        if unknown:
            fail(section, f"unknown keys {sorted(unknown)}")
        merged.update(user)
        resolved[section] = merged
    resolved["run"]["experiment"] = experiment
    if seed_override is not None:
        resolved["run"]["seed"] = int(seed_override)

    g = resolved["grid"]
    try:
        grid = GridSpec(int(g["d"]), int(g["n"]), float(g["L"]))
    except Exception as exc:
        fail("grid", str(exc))
    try:
        stable = StableParams(float(resolved["stable"]["alpha"]), grid.d)
    except Exception as exc:
        fail("stable.alpha", str(exc))
    try:
        kern = kernel_from_name(resolved["kernel"]["name"])
    except Exception as exc:
        fail("kernel.name", str(exc))

    dec = resolved["decay"]
    if int(dec["points"]) < 4:
        fail("decay.points", "need at least 4 probe times")
    if not (0 < dec["t_min"] < dec["t_max"]):
        fail("decay.t_min", "need 0 < t_min < t_max")
    for pair in dec["pairs"]:
        if len(pair) != 2:
            fail("decay.pairs", f"pair {pair} must have two entries")
        q, m = (_exponent(v) for v in pair)
        if not (m >= q >= 1):
            fail("decay.pairs", f"need m >= q >= 1, got {pair}")

    eta = resolved["eta"]
    if len(eta["T_list"]) < 2 or min(eta["T_list"]) <= 0:
        fail("eta.T_list", "need at least two positive horizons")
    if int(eta["trials"]) < 16:
        fail("eta.trials", "need at least 16 trials")

    sol = resolved["solve"]
    if not sol["p"] > 2:
        fail("solve.p", "the local theorem route needs p > 2")
    if not sol["T"] > 0 or int(sol["steps"]) < 2:
        fail("solve.T", "need T > 0 and steps >= 2")
    _check_u0(sol["u0"], lambda m: fail("solve.u0", m))

    par = resolved["particles"]
    if int(par["N"]) < 2:
        fail("particles.N", "need at least 2 particles")
    if int(par["n_iters"]) < 2:
        fail("particles.n_iters", "need at least 2 iterations")
    _check_u0(par["u0"], lambda m: fail("particles.u0", m))

    if experiment == "compare":
        cmp_ = resolved["compare"]
        if not cmp_["solve_run"]:
            fail("compare.solve_run", "path to a completed solve run is required")
        if not cmp_["particle_runs"]:
            fail("compare.particle_runs", "at least one completed particles run is required")

    return RunConfig(
        experiment=experiment,
        seed=int(resolved["run"]["seed"]),
        grid=grid,
        stable=stable,
        kernel=kern,
        resolved=resolved,
    )


def _check_u0(spec, fail) -> None:
    if not isinstance(spec, dict):
        fail("must be a table with one of: preset, file, expr")
        return
    kinds = [k for k in ("preset", "file", "expr") if k in spec]
    if len(kinds) != 1:
        fail("needs exactly one of: preset, file, expr")


def _exponent(v) -> float:
    if v in ("inf", "Inf", "INF"):
        return float("inf")
    return float(v)
