"""Periodic-torus grids and sampled scalar fields.

The torus [0, L)^d is sampled on n points per axis, grid point j mapping to
x_j = j*L/n.  Frequencies are the integer wavenumbers 2*pi*k/L with
k in {-n/2, ..., n/2 - 1} per axis (numpy FFT ordering).  All L^q norms are
Riemann cell sums with cell volume (L/n)^d; the L^inf norm is the grid max.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ParameterError


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid: dimension d in {1, 2}, n points per axis, side L."""

    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ParameterError(f"grid dimension must be 1 or 2, got {self.d}")
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ParameterError(f"n must be a power of two >= 8, got {self.n}")
        if not self.L > 0:
            raise ParameterError(f"torus side L must be positive, got {self.L}")

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return (self.L / self.n) ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    def axis_coords(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        ax = self.axis_coords()
        return tuple(np.meshgrid(*([ax] * self.d), indexing="ij"))


@lru_cache(maxsize=64)
def wavenumbers(grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Angular wavenumber arrays (one per axis, broadcast to grid shape)."""
    k1 = 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.spacing)
    if grid.d == 1:
        return (k1,)
    return tuple(np.meshgrid(k1, k1, indexing="ij"))


@lru_cache(maxsize=64)
def wavenumber_magnitude(grid: GridSpec) -> np.ndarray:
    ks = wavenumbers(grid)
    return np.sqrt(sum(k**2 for k in ks))


@lru_cache(maxsize=64)
def nyquist_mask(grid: GridSpec, axis: int) -> np.ndarray:
    """Boolean mask of the Nyquist plane along one axis.

    The Nyquist mode's derivative multiplier i*k is sign-ambiguous for real
    fields, so odd multipliers are zeroed there to keep outputs real.
    """
    idx = np.fft.fftfreq(grid.n) == -0.5
    if grid.d == 1:
        return idx
    masks = np.meshgrid(idx, idx, indexing="ij")
    return masks[axis]


@dataclass(frozen=True, eq=False)
class Field:
    """A real scalar sample over a grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("field contains NaN or Inf values")
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c) -> "Field":
        if isinstance(c, Field):
            self._check(c)
            return Field(self.grid, self.values * c.values)
        return Field(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def _check(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise ConfigurationError("fields live on different grids")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex Fourier coefficients of a field, numpy FFT layout.

    For a real field the coefficients satisfy the Hermitian symmetry
    coeffs(-k) = conj(coeffs(k)).
    """

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ConfigurationError(
                f"coefficient shape {c.shape} does not match grid shape {self.grid.shape}"
            )
        object.__setattr__(self, "coeffs", c)


def field_from_function(grid: GridSpec, fn: Callable[..., np.ndarray]) -> Field:
    """Sample ``fn`` on the grid; fn receives one coordinate array per axis."""
    return Field(grid, np.asarray(fn(*grid.meshgrid()), dtype=float))


def zero_field(grid: GridSpec) -> Field:
    return Field(grid, np.zeros(grid.shape))


def lp_norm(f: Field, p) -> float:
    """L^p Riemann-sum norm; p = inf gives the grid max."""
    if p == np.inf or p == float("inf"):
        return float(np.max(np.abs(f.values)))
    p = float(p)
    if p < 1:
        raise ParameterError(f"norm exponent must be >= 1, got {p}")
    return float((np.sum(np.abs(f.values) ** p) * f.grid.cell_volume) ** (1.0 / p))


def mean(f: Field) -> float:
    return float(np.mean(f.values))


def mass(f: Field) -> float:
    """Signed integral of the field over the torus."""
    return float(np.sum(f.values) * f.grid.cell_volume)


def edge_mass_fraction(f: Field, band: float = 0.05) -> float:
    """Fraction of |f| mass within ``band * L`` of the wrap seam at x = 0.

    Used to monitor whether initial data sits far enough from the periodic
    boundary for torus results to stand in for whole-space ones.
    """
    coords = f.grid.meshgrid()
    L = f.grid.L
    near = np.zeros(f.grid.shape, dtype=bool)
    for x in coords:
        dist = np.minimum(x, L - x)
        near |= dist < band * L
    total = np.sum(np.abs(f.values))
    if total == 0.0:
        return 0.0
    return float(np.sum(np.abs(f.values)[near]) / total)


def wrap_displacement(r: np.ndarray, L: float) -> np.ndarray:
    """Map displacements to the nearest periodic image in (-L/2, L/2]."""
    return r - L * np.round(r / L)
