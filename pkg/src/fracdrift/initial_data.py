"""Named initial-data presets and the u0 resolution logic.

Presets marked ``lip1`` are globally Lipschitz with constant <= the listed
bound, the class the global-existence run expects; signed or rough presets
are for local-solve and sampler exercises only.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, ParameterError
from .fields import Field, GridSpec, field_from_function, wrap_displacement
from .kernels import random_band_limited


def gaussian_bump(
    grid: GridSpec, width: float = 0.5, amplitude: float = 1.0, center: float | None = None
) -> Field:
    c = grid.L / 2.0 if center is None else center
    def fn(*coords):
        r2 = sum(wrap_displacement(x - c, grid.L) ** 2 for x in coords)
        return amplitude * np.exp(-r2 / (2.0 * width**2))
    return field_from_function(grid, fn)


def signed_double_bump(
    grid: GridSpec, width: float = 0.4, amplitude: float = 1.0, separation: float | None = None
) -> Field:
    sep = grid.L / 4.0 if separation is None else separation
    c1, c2 = grid.L / 2.0 - sep / 2.0, grid.L / 2.0 + sep / 2.0
    def fn(*coords):
        r1 = sum(wrap_displacement(x - c1, grid.L) ** 2 for x in coords)
        r2 = sum(wrap_displacement(x - c2, grid.L) ** 2 for x in coords)
        return amplitude * (np.exp(-r1 / (2.0 * width**2)) - np.exp(-r2 / (2.0 * width**2)))
    return field_from_function(grid, fn)


def random_bandlimited(grid: GridSpec, k_max: int = 6, amplitude: float = 1.0, seed: int = 0) -> Field:
    f = random_band_limited(grid, np.random.default_rng(seed), k_cut=k_max)
    peak = np.max(np.abs(f.values))
    return f * (amplitude / peak if peak > 0 else 1.0)


PRESETS = {
    "gaussian_bump": (gaussian_bump, True),
    "signed_double_bump": (signed_double_bump, True),
    "random_bandlimited": (random_bandlimited, False),
}


def is_lip1_compatible(name: str) -> bool:
    if name not in PRESETS:
        raise ParameterError(f"unknown initial-data preset {name!r}")
    return PRESETS[name][1]


def resolve_u0(grid: GridSpec, spec: dict) -> Field:
    """Build u0 from a config table: a named preset with kwargs, a container
    file, or an expression in the coordinates (x in d=1; x1, x2 in d=2)."""
    kinds = [k for k in ("preset", "file", "expr") if k in spec]
    if len(kinds) != 1:
        raise ConfigurationError("u0 needs exactly one of: preset, file, expr")
    if "preset" in spec:
        name = spec["preset"]
        if name not in PRESETS:
            raise ConfigurationError(
                f"unknown u0 preset {name!r}; known: {sorted(PRESETS)}"
            )
        kwargs = {k: v for k, v in spec.items() if k != "preset"}
        return PRESETS[name][0](grid, **kwargs)
    if "file" in spec:
        from .storage import load_field

        f = load_field(spec["file"])
        if f.grid != grid:
            raise ConfigurationError(
                f"u0 file grid {f.grid} does not match the configured grid {grid}"
            )
        return f
    code = compile(spec["expr"], "<u0 expr>", "eval")

    def fn(*coords):
        names = {"np": np}
        if grid.d == 1:
            names["x"] = coords[0]
        else:
            names["x1"], names["x2"] = coords
        return eval(code, {"__builtins__": {}}, names)

    return field_from_function(grid, fn)
