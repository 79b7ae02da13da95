"""Calderon-Zygmund kernels, their operators, and boundedness probes.

Two kernel forms:

* multiplier: a bounded homogeneous-degree-zero Fourier symbol m(k) with
  m(0) = 0, applied by FFT (exact on the grid).  Canonical instances are the
  Hilbert transform and the Riesz transforms.
* pointwise: an evaluable b(x, y) with size constant C and regularity
  exponent delta, applied by principal-value quadrature.  Flagged
  experimental; the catalog instance is the circle-periodized Hilbert kernel
  cot(pi (x-y)/L) / L, whose full image sum of 1/(pi r) it equals exactly.

Operator norms are estimated from below by randomized trials and never
claimed as upper bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ParameterError, UnsupportedKernelForm
from .fields import Field, GridSpec, lp_norm, nyquist_mask, wavenumber_magnitude, wavenumbers

MULTIPLIER = "multiplier"
POINTWISE = "pointwise"


@dataclass(frozen=True)
class CZKernel:
    """A Calderon-Zygmund kernel descriptor.

    Exactly one of ``symbol`` (multiplier form) or ``b`` (pointwise form) is
    set.  ``symbol(grid)`` returns the complex multiplier over the grid's
    wavenumbers with m(0) = 0.  ``b(x, y, L)`` evaluates the kernel at points
    already wrapped to the nearest periodic image (|x - y| <= L/2).
    """

    name: str
    form: str
    symbol: Callable[[GridSpec], np.ndarray] | None = None
    b: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None
    size_constant: float | None = None
    holder_exponent: float | None = None

    def __post_init__(self):
        if self.form not in (MULTIPLIER, POINTWISE):
            raise ParameterError(f"unknown kernel form {self.form!r}")
        if self.form == MULTIPLIER and self.symbol is None:
            raise ParameterError("multiplier kernel needs a symbol")
        if self.form == POINTWISE:
            if self.b is None:
                raise ParameterError("pointwise kernel needs b(x, y, L)")
            if self.holder_exponent is None or not self.holder_exponent > 0:
                raise ParameterError("pointwise kernel needs a positive regularity exponent")


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def hilbert_kernel() -> CZKernel:
    """Hilbert transform, m(k) = -i sgn(k) (d=1; Nyquist zeroed)."""

    def symbol(grid: GridSpec) -> np.ndarray:
        if grid.d != 1:
            raise ParameterError("hilbert kernel is one-dimensional")
        (k,) = wavenumbers(grid)
        m = -1j * np.sign(k)
        return np.where(nyquist_mask(grid, 0), 0.0, m)

    return CZKernel(name="hilbert", form=MULTIPLIER, symbol=symbol)


def riesz_kernel(j: int) -> CZKernel:
    """Riesz transform component j, m(k) = -i k_j / |k|."""

    def symbol(grid: GridSpec) -> np.ndarray:
        if not 1 <= j <= grid.d:
            raise ParameterError(f"riesz component {j} outside 1..{grid.d}")
        ks = wavenumbers(grid)
        kmag = wavenumber_magnitude(grid)
        safe = np.where(kmag == 0.0, 1.0, kmag)
        m = -1j * ks[j - 1] / safe
        m = np.where(kmag == 0.0, 0.0, m)
        return np.where(nyquist_mask(grid, j - 1), 0.0, m)

    return CZKernel(name=f"riesz:{j}", form=MULTIPLIER, symbol=symbol)


def zero_kernel() -> CZKernel:
    def symbol(grid: GridSpec) -> np.ndarray:
        return np.zeros(grid.shape, dtype=complex)

    return CZKernel(name="zero", form=MULTIPLIER, symbol=symbol)


def smooth_multiplier_kernel(fn: Callable[..., np.ndarray], name: str = "smooth_h0") -> CZKernel:
    """User-supplied smooth degree-zero multiplier m(khat) of the unit direction.

    ``fn`` receives the unit-direction components (one array per axis) and must
    return a bounded array; the k = 0 value is forced to zero.
    """

    def symbol(grid: GridSpec) -> np.ndarray:
        ks = wavenumbers(grid)
        kmag = wavenumber_magnitude(grid)
        safe = np.where(kmag == 0.0, 1.0, kmag)
        unit = [k / safe for k in ks]
        m = np.asarray(fn(*unit), dtype=complex)
        m = np.broadcast_to(m, grid.shape).copy()
        m[tuple(0 for _ in range(grid.d))] = 0.0
        if not np.all(np.isfinite(m)):
            raise ParameterError("smooth multiplier produced non-finite values")
        return m

    return CZKernel(name=name, form=MULTIPLIER, symbol=symbol)


def periodized_hilbert_pointwise() -> CZKernel:
    """Circle-periodized Hilbert kernel cot(pi (x - y)/L) / L.

    This is the full periodic image sum of 1/(pi (x - y)); it satisfies the
    size bound with C = 1/pi and the regularity conditions with delta = 2.
    """

    def b(x: np.ndarray, y: np.ndarray, L: float) -> np.ndarray:
        r = x - y
        return 1.0 / (np.tan(np.pi * r / L) * L)

    return CZKernel(
        name="hilbert_pv", form=POINTWISE, b=b, size_constant=1.0 / np.pi, holder_exponent=2.0
    )


def canonical_kernel_name(name: str) -> str:
    """Multiplier and principal-value forms of one kernel share this name."""
    return name[:-3] if name.endswith("_pv") else name


def kernel_from_name(spec: str) -> CZKernel:
    """Resolve a kernel from its run-configuration name.

    Names: ``hilbert`` | ``riesz:j`` | ``zero`` | ``hilbert_pv`` |
    ``smooth_h0:<expr>`` where the expression sees the unit-direction
    components ``u1`` (and ``u2`` in d=2) plus numpy as ``np``.
    """
    if spec == "hilbert":
        return hilbert_kernel()
    if spec == "zero":
        return zero_kernel()
    if spec == "hilbert_pv":
        return periodized_hilbert_pointwise()
    if spec.startswith("riesz:"):
        return riesz_kernel(int(spec.split(":", 1)[1]))
    if spec.startswith("smooth_h0:"):
        expr = spec.split(":", 1)[1]
        code = compile(expr, "<kernel expr>", "eval")

        def fn(*unit):
            names = {"np": np, "u1": unit[0]}
            if len(unit) > 1:
                names["u2"] = unit[1]
            return eval(code, {"__builtins__": {}}, names)

        return smooth_multiplier_kernel(fn, name=f"smooth_h0:{expr}")
    raise ParameterError(f"unknown kernel name {spec!r}")


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def cz_apply(kern: CZKernel, f: Field) -> Field:
    """Apply a multiplier-form kernel spectrally; annihilates constants."""
    if kern.form != MULTIPLIER:
        raise UnsupportedKernelForm(
            f"kernel {kern.name!r} is pointwise; use cz_apply_pv for principal-value quadrature"
        )
    m = kern.symbol(f.grid)
    return Field(f.grid, np.fft.ifftn(m * np.fft.fftn(f.values)).real)


def cz_apply_pv(kern: CZKernel, f: Field, eps: float) -> Field:
    """Principal-value quadrature of a pointwise kernel (d=1).

    Far field |x - y| > eps sums b(x, y) f(y); the near field
    0 < |x - y| <= eps uses the antisymmetric correction
    b(x, y)(f(y) - f(x)), which cancels the odd singular part exactly.
    """
    if kern.form != POINTWISE:
        raise UnsupportedKernelForm(f"kernel {kern.name!r} has no pointwise form")
    if f.grid.d != 1:
        raise UnsupportedKernelForm("principal-value quadrature is implemented for d=1")
    h = f.grid.spacing
    if eps < h * (1 - 1e-12):
        raise ParameterError(f"eps={eps} must be at least the grid spacing {h}")
    L = f.grid.L
    x = f.grid.axis_coords()
    r = x[:, None] - x[None, :]
    r -= L * np.round(r / L)
    # grid distances are exact multiples of h; classify by ring index so the
    # cutoff never splits a symmetric +-r pair through float rounding
    ring = np.rint(np.abs(r) / h).astype(int)
    m_eps = int(np.floor(eps / h + 1e-9))
    with np.errstate(divide="ignore", invalid="ignore"):
        bvals = kern.b(x[:, None], x[:, None] - r, L)
    bvals = np.where(ring == 0, 0.0, bvals)
    far = ring > m_eps
    near = (ring >= 1) & ~far  # antisymmetric correction from the first ring out
    v = f.values
    out = (np.where(far, bvals, 0.0) @ v) * h
    near_b = np.where(near, bvals, 0.0)
    out += (near_b @ v - near_b.sum(axis=1) * v) * h
    return Field(f.grid, out)


def apply_kernel(kern: CZKernel, f: Field, eps: float | None = None) -> Field:
    """Dispatch on kernel form; pointwise kernels default to eps = 2h."""
    if kern.form == MULTIPLIER:
        return cz_apply(kern, f)
    return cz_apply_pv(kern, f, eps if eps is not None else 2.0 * f.grid.spacing)


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


def random_band_limited(grid: GridSpec, rng: np.random.Generator, k_cut: int | None = None) -> Field:
    """Real random field with spectrum supported on modes |k_idx| <= k_cut."""
    if k_cut is None:
        k_cut = grid.n // 4
    spec = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    idx = np.fft.fftfreq(grid.n) * grid.n
    if grid.d == 1:
        keep = np.abs(idx) <= k_cut
    else:
        ix, iy = np.meshgrid(idx, idx, indexing="ij")
        keep = np.maximum(np.abs(ix), np.abs(iy)) <= k_cut
    spec = np.where(keep, spec, 0.0)
    return Field(grid, np.fft.ifftn(spec).real)


def operator_norm_probe(
    kern: CZKernel,
    grid: GridSpec,
    p: float,
    trials: int = 64,
    seed: int = 0,
    eps: float | None = None,
) -> float:
    """Randomized lower bound on the L^p operator norm A_p.

    Max of |K f|_p / |f|_p over seeded random band-limited fields; degenerate
    (zero) fields are skipped.
    """
    if not (1.1 <= p <= 16):
        raise ParameterError(f"probe exponent must lie in [1.1, 16], got {p}")
    if trials < 32:
        raise ParameterError(f"need at least 32 trials, got {trials}")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        f = random_band_limited(grid, rng)
        denom = lp_norm(f, p)
        if denom < 1e-300:
            continue
        best = max(best, lp_norm(apply_kernel(kern, f, eps), p) / denom)
    return best


def holder_seminorm(f: Field, exponent: float, max_distance_fraction: float = 0.25) -> float:
    """Discrete Holder seminorm: max over grid pairs within L/4 of
    |f(x) - f(y)| / |x - y|^exponent."""
    h = f.grid.spacing
    max_m = max(1, int(round(max_distance_fraction * f.grid.n)))
    v = f.values
    best = 0.0
    if f.grid.d == 1:
        for m in range(1, max_m + 1):
            diff = np.max(np.abs(np.roll(v, -m) - v))
            best = max(best, diff / (m * h) ** exponent)
        return best
    for mx in range(-max_m, max_m + 1):
        for my in range(-max_m, max_m + 1):
            if mx == 0 and my == 0:
                continue
            dist = h * np.hypot(mx, my)
            if dist > max_distance_fraction * f.grid.L:
                continue
            diff = np.max(np.abs(np.roll(v, (-mx, -my), axis=(0, 1)) - v))
            best = max(best, diff / dist**exponent)
    return best


def lipschitz_probe(
    kern: CZKernel,
    grid: GridSpec,
    eps_holder: float,
    trials: int = 64,
    seed: int = 0,
) -> float:
    """Randomized lower bound on the Holder-space operator bound.

    Max over random smooth fields of the output/input Holder-eps seminorm
    ratio; fields with zero seminorm are skipped.
    """
    cap = min(kern.holder_exponent, 1.0) if kern.holder_exponent is not None else 1.0
    if not (0 < eps_holder <= cap):
        raise ParameterError(f"holder exponent must lie in (0, {cap}], got {eps_holder}")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        f = random_band_limited(grid, rng, k_cut=grid.n // 8)
        denom = holder_seminorm(f, eps_holder)
        if denom < 1e-300:
            continue
        best = max(best, holder_seminorm(apply_kernel(kern, f), eps_holder) / denom)
    return best


def validate_pointwise_bounds(
    kern: CZKernel, grid: GridSpec, n_pairs: int = 512, seed: int = 0
) -> dict:
    """Check the three printed kernel inequalities on a randomized sample set.

    Size: |b(x,y)| <= C / |x-y|^d.  Regularity (both slots): the increment is
    bounded by C |x-x'| / (|x-y| + |x'-y|)^delta whenever
    |x-x'| <= max(|x-y|, |x'-y|) / 2.  Returns the max observed constants.
    """
    if kern.form != POINTWISE:
        raise UnsupportedKernelForm("bounds validation applies to pointwise kernels")
    if grid.d != 1:
        raise UnsupportedKernelForm("bounds validation is implemented for d=1")
    rng = np.random.default_rng(seed)
    L = grid.L
    h = grid.spacing

    def wrap(r):
        return r - L * np.round(r / L)

    x = rng.uniform(0, L, n_pairs)
    y = x + np.sign(rng.standard_normal(n_pairs)) * rng.uniform(h, L / 2 * 0.98, n_pairs)
    r = wrap(x - y)
    bxy = kern.b(x, x - r, L)
    size_ratio = float(np.max(np.abs(bxy) * np.abs(r) ** grid.d))

    # x-increment pairs honoring the |x-x'| <= max(...)/2 constraint
    xp = x + rng.uniform(-0.25, 0.25, n_pairs) * np.abs(r)
    rp = wrap(xp - y)
    ok = np.abs(x - xp) <= 0.5 * np.maximum(np.abs(r), np.abs(rp))
    bxpy = kern.b(xp, xp - rp, L)
    delta = kern.holder_exponent
    with np.errstate(divide="ignore", invalid="ignore"):
        reg = np.abs(bxy - bxpy) * (np.abs(r) + np.abs(rp)) ** delta / np.abs(x - xp)
    reg_ratio = float(np.nanmax(np.where(ok & (np.abs(x - xp) > 0), reg, np.nan)))

    return {
        "size_constant_observed": size_ratio,
        "size_ok": size_ratio <= (kern.size_constant or np.inf) * (1 + 1e-9),
        "regularity_constant_observed": reg_ratio,
        "delta": delta,
    }
