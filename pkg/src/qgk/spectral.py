"""Transforms, Fourier multipliers, derivatives, projections and dealiased
products on the periodic grid.

All operations are pure functions of their inputs.  Products are evaluated
pseudo-spectrally; under the default 3/2 zero-padding rule the returned
coefficients on the symmetric band equal the exact convolution of the
inputs, which is what makes the discrete integration-by-parts identities of
the transport operator hold to round-off.
"""

from __future__ import annotations

import os
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .grid import (
    THREE_HALVES,
    GridSpec,
    RealField,
    SpectralField,
    band_keep,
    index_grids,
    multiplier_table,
    require_same_grid,
    xi_squared,
    _flip_index,
)


def fft_workers() -> int:
    """Worker count for FFT calls; QGK_THREADS caps it (0 = auto)."""
    raw = os.environ.get("QGK_THREADS", "1")
    try:
        val = int(raw)
    except ValueError:
        return 1
    if val == 0:
        return os.cpu_count() or 1
    return max(1, val)


# ---------------------------------------------------------------------------
# transforms


def forward_transform(f: RealField) -> SpectralField:
    """Real samples -> Fourier-series coefficients (forward divides by n^2)."""
    if not np.all(np.isfinite(f.samples)):
        raise ValueError("forward_transform: input samples contain non-finite values")
    n = f.grid.n
    coeffs = sfft.fft2(f.samples, workers=fft_workers()) / (n * n)
    return SpectralField(f.grid, coeffs)


def inverse_transform(u: SpectralField) -> RealField:
    """Fourier-series coefficients -> samples at the grid points."""
    n = u.grid.n
    samples = sfft.ifft2(u.coeffs, workers=fft_workers()).real * (n * n)
    return RealField(u.grid, samples)


# ---------------------------------------------------------------------------
# diagonal operators


def apply_multiplier(u: SpectralField, symbol: np.ndarray) -> SpectralField:
    """Multiply coefficients mode-wise by a real symbol table."""
    symbol = np.asarray(symbol)
    if symbol.shape != u.grid.shape:
        raise ValueError(f"symbol shape {symbol.shape} does not match grid {u.grid.shape}")
    return SpectralField(u.grid, u.coeffs * symbol)


def gradient(u: SpectralField) -> tuple[SpectralField, SpectralField]:
    mt = multiplier_table(u.grid)
    return (
        SpectralField(u.grid, u.coeffs * mt.ixi1),
        SpectralField(u.grid, u.coeffs * mt.ixi2),
    )


def perp_gradient(u: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Rotated gradient (-d2 u, d1 u); divergence-free mode by mode."""
    mt = multiplier_table(u.grid)
    return (
        SpectralField(u.grid, -u.coeffs * mt.ixi2),
        SpectralField(u.grid, u.coeffs * mt.ixi1),
    )


def divergence(u1: SpectralField, u2: SpectralField) -> SpectralField:
    grid = require_same_grid(u1, u2)
    mt = multiplier_table(grid)
    return SpectralField(grid, u1.coeffs * mt.ixi1 + u2.coeffs * mt.ixi2)


@lru_cache(maxsize=None)
def _laplacian_symbol(grid: GridSpec) -> np.ndarray:
    sym = -xi_squared(grid) * band_keep(grid)
    sym.setflags(write=False)
    return sym


def laplacian(u: SpectralField) -> SpectralField:
    return SpectralField(u.grid, u.coeffs * _laplacian_symbol(u.grid))


def bilaplacian(u: SpectralField) -> SpectralField:
    q = xi_squared(u.grid)
    return SpectralField(u.grid, u.coeffs * (q * q * band_keep(u.grid)))


def one_minus_laplacian(u: SpectralField) -> SpectralField:
    """(Id - Delta) u.  Not a derivative: keeps whatever band u has."""
    return SpectralField(u.grid, u.coeffs * (1.0 + xi_squared(u.grid)))


@lru_cache(maxsize=None)
def _jn_mask(grid: GridSpec, n_cut: float) -> np.ndarray:
    mask = (xi_squared(grid) <= n_cut).astype(float)
    mask.setflags(write=False)
    return mask


def project_jn(u: SpectralField, n_cut: float) -> SpectralField:
    """Sharp Galerkin cutoff: zero every coefficient with |xi|^2 > n_cut."""
    if not n_cut > 0:
        raise ValueError(f"n_cut must be positive, got {n_cut!r}")
    return SpectralField(u.grid, u.coeffs * _jn_mask(u.grid, float(n_cut)))


def sanitize_band(u: SpectralField) -> SpectralField:
    """Zero the Nyquist cells, restricting u to the symmetric band."""
    return SpectralField(u.grid, u.coeffs * band_keep(u.grid))


# ---------------------------------------------------------------------------
# inner products and norms


def inner_product(u: SpectralField, v: SpectralField) -> float:
    """L^2(torus) pairing via Parseval."""
    grid = require_same_grid(u, v)
    L2 = grid.box_length * grid.box_length
    return L2 * float(np.real(np.vdot(v.coeffs, u.coeffs)))


def weighted_l2(u: SpectralField, weight: np.ndarray) -> float:
    """sqrt(L^2 sum weight |c|^2) for a nonnegative symbol table."""
    L2 = u.grid.box_length ** 2
    val = L2 * float(np.sum(weight * (u.coeffs.real ** 2 + u.coeffs.imag ** 2)))
    return float(np.sqrt(max(val, 0.0)))


def l2_norm(u: SpectralField) -> float:
    L2 = u.grid.box_length ** 2
    return float(np.sqrt(L2 * np.sum(u.coeffs.real ** 2 + u.coeffs.imag ** 2)))


@lru_cache(maxsize=None)
def _sobolev_weight(grid: GridSpec, s: float) -> np.ndarray:
    w = (1.0 + xi_squared(grid)) ** s
    w.setflags(write=False)
    return w


def sobolev_norm(u: SpectralField, s: float) -> float:
    """H^s norm, (sum (1+|xi|^2)^s |c|^2 L^2)^(1/2)."""
    return weighted_l2(u, _sobolev_weight(u.grid, float(s)))


# ---------------------------------------------------------------------------
# dealiased products

# Padded-grid layout for the 3/2 rule: the n-band is embedded in an M = 3n/2
# grid, multiplied pointwise in physical space, and truncated back.  Aliases
# of any product mode |s| <= n - 2 land outside the retained band, so the
# retained coefficients are the exact convolution.


@lru_cache(maxsize=None)
def _pad_slices(n: int) -> tuple[slice, slice, int]:
    m = 3 * n // 2
    return slice(0, n // 2), slice(m - n // 2 + 1, m), m


def _pad_half_spectrum(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Embed a Nyquist-free n-band into the (M, M//2+1) rfft2 layout."""
    pos, neg, m = _pad_slices(n)
    out = np.zeros((m, m // 2 + 1), dtype=complex)
    half = n // 2
    out[pos, :half] = coeffs[:half, :half]
    out[neg, :half] = coeffs[half + 1:, :half]
    return out


def _extract_band(hprod: np.ndarray, n: int) -> np.ndarray:
    """Truncate an rfft2-layout padded spectrum back to the n-band."""
    pos, neg, _ = _pad_slices(n)
    half = n // 2
    out = np.zeros((n, n), dtype=complex)
    out[:half, :half] = hprod[pos, :half]
    out[half + 1:, :half] = hprod[neg, :half]
    # negative columns from Hermitian symmetry of the real product
    flip = _flip_index(n)
    cols = np.arange(half + 1, n)
    out[:, cols] = np.conj(out[np.ix_(flip, n - cols)])
    return out


def _padded_physical(u: SpectralField) -> np.ndarray:
    n = u.grid.n
    keep = band_keep(u.grid)
    h = _pad_half_spectrum(u.coeffs * keep, n)
    m = h.shape[0]
    return sfft.irfft2(h, s=(m, m), workers=fft_workers())


def _padded_product_sum(pairs) -> np.ndarray:
    """Sum of exact-convolution products over (u, v) pairs, one forward FFT."""
    first_u, _ = pairs[0]
    n = first_u.grid.n
    _, _, m = _pad_slices(n)
    acc = None
    for u, v in pairs:
        term = _padded_physical(u) * _padded_physical(v)
        acc = term if acc is None else acc + term
    hprod = sfft.rfft2(acc, workers=fft_workers()) * (m * m)
    return _extract_band(hprod, n)


@lru_cache(maxsize=None)
def _two_thirds_mask(grid: GridSpec) -> np.ndarray:
    k1, k2 = index_grids(grid)
    cut = grid.n // 3
    mask = ((np.abs(k1) <= cut) & (np.abs(k2) <= cut)).astype(float)
    mask.setflags(write=False)
    return mask


def _truncated_product_sum(pairs) -> np.ndarray:
    grid = pairs[0][0].grid
    n = grid.n
    mask = _two_thirds_mask(grid)
    acc = None
    for u, v in pairs:
        pu = sfft.ifft2(u.coeffs * mask, workers=fft_workers()).real
        pv = sfft.ifft2(v.coeffs * mask, workers=fft_workers()).real
        term = pu * pv
        acc = term if acc is None else acc + term
    prod = sfft.fft2(acc, workers=fft_workers()) * ((n * n))
    return prod * mask


def product_sum(pairs: list[tuple[SpectralField, SpectralField]]) -> SpectralField:
    """sum_i dealias(u_i * v_i) under the grid's dealias policy."""
    if not pairs:
        raise ValueError("product_sum needs at least one pair")
    grid = pairs[0][0].grid
    for u, v in pairs:
        require_same_grid(u, v)
        if u.grid != grid:
            raise ValueError("product_sum: mixed grids")
    if grid.dealias == THREE_HALVES:
        return SpectralField(grid, _padded_product_sum(pairs))
    return SpectralField(grid, _truncated_product_sum(pairs))


def dealiased_product(u: SpectralField, v: SpectralField) -> SpectralField:
    """Pointwise product, dealiased per the grid policy.

    With ``three_halves_padding`` the result on the symmetric band is the
    exact convolution of the (Nyquist-sanitized) inputs.  With
    ``two_thirds_truncation`` both inputs and the result are truncated to
    |k_i| <= n//3; on grids with 3 | n the edge shell aliases, which is the
    documented negative control for the cancellation tests.
    """
    require_same_grid(u, v)
    return product_sum([(u, v)])


# ---------------------------------------------------------------------------
# deterministic field constructors


def cosine_field(grid: GridSpec, kx: int, ky: int, amplitude: float = 1.0) -> SpectralField:
    """amplitude * cos(xi_k . x) built directly in coefficient space."""
    half = grid.n // 2
    if not (-half < kx < half and -half < ky < half) or (kx, ky) == (0, 0):
        raise ValueError(f"cosine mode ({kx},{ky}) outside the symmetric band")
    c = np.zeros(grid.shape, dtype=complex)
    c[kx % grid.n, ky % grid.n] = 0.5 * amplitude
    c[(-kx) % grid.n, (-ky) % grid.n] = 0.5 * amplitude
    return SpectralField(grid, c)


def _hermitian_random(grid: GridSpec, seed: int, radial_amp) -> SpectralField:
    """Random field with |c(k)| = radial_amp(|k|) and i.i.d. phases.

    Phases are drawn once over the half-plane {k1 > 0} u {k1 = 0, k2 > 0} in
    a fixed order and mirrored, so the result is deterministic in the seed
    and exactly Hermitian.  Nyquist cells stay empty.
    """
    n = grid.n
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=grid.shape)
    k1, k2 = index_grids(grid)
    half_plane = (k1 > 0) | ((k1 == 0) & (k2 > 0))
    kk = np.hypot(k1, k2)
    amp = np.asarray(radial_amp(kk), dtype=float)
    c = np.zeros(grid.shape, dtype=complex)
    c[half_plane] = amp[half_plane] * np.exp(1j * phases[half_plane])
    flip = _flip_index(n)
    mirrored = np.conj(c[np.ix_(flip, flip)])
    c = np.where(half_plane, c, mirrored)
    c[0, 0] = 0.0
    c *= band_keep(grid)
    return SpectralField(grid, c)


def random_band_field(
    grid: GridSpec,
    seed: int,
    amplitude: float = 1.0,
    s: float = 3.0,
    band_lo: int = 1,
    band_hi: int | None = None,
) -> SpectralField:
    """Seeded random field, power-law radial profile, band-limited.

    Coefficient magnitudes follow (1 + |xi|^2)^(-(s+1)) inside the index
    shell band_lo <= |k| <= band_hi and the field is scaled to the requested
    H^s amplitude.
    """
    if band_hi is None:
        band_hi = grid.n // 3
    lam = grid.frequency_unit

    def radial_amp(kk):
        q = (lam * kk) ** 2
        inside = (kk >= band_lo) & (kk <= band_hi)
        return np.where(inside, (1.0 + q) ** (-(s + 1.0)), 0.0)

    field = _hermitian_random(grid, seed, radial_amp)
    norm = sobolev_norm(field, s)
    if norm == 0.0:
        raise ValueError(f"empty band [{band_lo}, {band_hi}] on n={grid.n}")
    field.coeffs *= amplitude / norm
    return field


def random_exponential_field(
    grid: GridSpec,
    seed: int,
    amplitude: float = 1.0,
    decay: float = 0.5,
    s: float = 3.0,
) -> SpectralField:
    """Seeded random field with exponentially decaying spectrum (analytic)."""

    def radial_amp(kk):
        return np.where(kk > 0, np.exp(-decay * kk), 0.0)

    field = _hermitian_random(grid, seed, radial_amp)
    norm = sobolev_norm(field, s)
    field.coeffs *= amplitude / norm
    return field
