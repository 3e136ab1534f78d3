"""
Spectral synthesis of stationary Gaussian random fields on periodic grids,
plus the auxiliary input generators (range normalization, zigzag functions).

Sampling weights Hermitian complex white noise by sqrt(S) and inverse
transforms; on the periodic grid the resulting covariance is exactly the
circulant matrix C = F^{-1} diag(S) F (forward transform unscaled, inverse
divided by the point count, as everywhere in this package). Densities are
normalized so the per-point variance (the circulant diagonal, (1/M)*sum S)
equals the kernel variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ive, roots_genlaguerre

from .spectral import Field, SpectralGrid

__all__ = [
    "KernelSpec",
    "RangeSpec",
    "spectral_density",
    "sample_grf",
    "sample_grf_values",
    "hermitian_noise",
    "circulant_covariance_1d",
    "normalize_range",
    "zigzag",
]

_FAMILIES = ("rbf", "matern", "rq", "periodic", "spectral_mixture", "white")

_RQ_NODES = 16


@dataclass(frozen=True)
class KernelSpec:
    """Stationary covariance kernel family with parameters.

    ``variance`` is k(0); ``length_scale`` follows
    k_rbf(r) = variance * exp(-r^2 / (2 * length_scale^2)).
    Spectral-mixture components are (weight, mean frequency per axis,
    frequency variance per axis) triples; their density is symmetrized so
    the kernel stays real.
    """

    family: str
    variance: float = 1.0
    length_scale: float = 0.1
    matern_nu: float = 1.5
    rq_alpha: float = 1.0
    period: float = 0.5
    mixture: tuple = field(default=())

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        for name in ("variance", "length_scale", "matern_nu", "rq_alpha", "period"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.family == "spectral_mixture":
            if not self.mixture:
                raise ValueError("spectral_mixture needs at least one component")
            for comp in self.mixture:
                w = comp[0]
                if not w > 0:
                    raise ValueError("mixture weights must be strictly positive")

    def describe(self) -> dict:
        d = {"family": self.family, "variance": self.variance}
        if self.family in ("rbf", "matern", "rq", "periodic"):
            d["length_scale"] = self.length_scale
        if self.family == "matern":
            d["matern_nu"] = self.matern_nu
        if self.family == "rq":
            d["rq_alpha"] = self.rq_alpha
        if self.family == "periodic":
            d["period"] = self.period
        if self.family == "spectral_mixture":
            d["mixture"] = list(self.mixture)
        return d


@dataclass(frozen=True)
class RangeSpec:
    """Target value range for affine normalization."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got ({self.lo}, {self.hi})")


def _omega_axes(grid: SpectralGrid) -> list[np.ndarray]:
    """Per-axis radian frequencies in full FFT order."""
    k = np.rint(np.fft.fftfreq(grid.n) * grid.n)
    return [2.0 * np.pi * k / grid.length for _ in range(grid.dims)]


def _omega_norm2(grid: SpectralGrid) -> np.ndarray:
    axes = _omega_axes(grid)
    if grid.dims == 1:
        return axes[0] ** 2
    return axes[0][:, None] ** 2 + axes[1][None, :] ** 2


def _periodic_axis_density(grid: SpectralGrid, length_scale: float, period: float) -> np.ndarray:
    """Comb along one axis: lines at multiples of 2*pi/period.

    Amplitudes are the exact Fourier coefficients of
    exp(-2 sin^2(pi tau / p) / l^2), i.e. scaled Bessel I_m(1/l^2);
    amplitudes below 1e-14 of the peak are dropped.
    """
    k = np.rint(np.fft.fftfreq(grid.n) * grid.n).astype(int)
    dens = np.zeros(grid.n)
    ratio = grid.length / period
    z = 1.0 / length_scale**2
    for i, kk in enumerate(k):
        if abs(ratio) < 1e-12:
            continue
        m = kk / ratio  # harmonic index: omega_k = m * (2 pi / p)
        if abs(m - round(m)) > 1e-9:
            continue
        dens[i] = ive(int(round(abs(m))), z)
    peak = dens.max()
    if peak > 0:
        dens[dens < 1e-14 * peak] = 0.0
    return dens


def _unnormalized_density(kernel: KernelSpec, grid: SpectralGrid) -> np.ndarray:
    d = grid.dims
    l = kernel.length_scale
    if kernel.family == "white":
        return np.ones((grid.n,) * d)
    if kernel.family == "rbf":
        return np.exp(-0.5 * l**2 * _omega_norm2(grid))
    if kernel.family == "matern":
        nu = kernel.matern_nu
        return (2.0 * nu / l**2 + _omega_norm2(grid)) ** (-(nu + d / 2.0))
    if kernel.family == "rq":
        # inverse-Gamma scale mixture of squared-exponential densities,
        # integrated with generalized Gauss-Laguerre nodes
        alpha = kernel.rq_alpha
        nodes, weights = roots_genlaguerre(_RQ_NODES, alpha - 1.0)
        w2 = _omega_norm2(grid)
        dens = np.zeros_like(w2)
        for t, w in zip(nodes, weights):
            gscale = t / (alpha * l**2)  # inverse squared length of the component
            dens += w * gscale ** (-d / 2.0) * np.exp(-0.5 * w2 / gscale)
        return dens
    if kernel.family == "periodic":
        ax = _periodic_axis_density(grid, l, kernel.period)
        if d == 1:
            return ax
        return ax[:, None] * ax[None, :]
    if kernel.family == "spectral_mixture":
        axes = _omega_axes(grid)
        if d == 1:
            grids = [axes[0]]
        else:
            grids = [axes[0][:, None], axes[1][None, :]]
        dens = np.zeros((grid.n,) * d)
        for comp in kernel.mixture:
            w, mu, var = comp
            mu = np.broadcast_to(np.asarray(mu, dtype=float), (d,))
            var = np.broadcast_to(np.asarray(var, dtype=float), (d,))
            for sign in (1.0, -1.0):  # symmetrize: real kernels need even S
                q = np.zeros((grid.n,) * d)
                for axis in range(d):
                    q = q + (grids[axis] - sign * mu[axis]) ** 2 / var[axis]
                dens += 0.5 * w * np.exp(-0.5 * q)
        return dens
    raise AssertionError(kernel.family)


def spectral_density(kernel: KernelSpec, grid: SpectralGrid) -> np.ndarray:
    """Per-mode nonnegative weights S in full FFT layout.

    Normalized so the circulant diagonal (1/M) * sum(S) equals the kernel
    variance; the white kernel is exactly flat at ``variance``.
    """
    dens = _unnormalized_density(kernel, grid)
    dens = np.maximum(dens, 0.0)
    total = dens.sum()
    if not total > 0:
        raise ValueError("kernel spectral density vanished on this grid")
    return kernel.variance * grid.npoints * dens / total


def hermitian_noise(grid: SpectralGrid, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance complex white noise with Hermitian symmetry, full layout.

    Self-conjugate modes get real standard Gaussians, every other mode an
    independent standard complex Gaussian; the redundant half is the
    conjugate mirror, so the inverse transform is real.
    """
    n = grid.n
    shape = (n,) * grid.dims
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    xi = (re + 1j * im) / np.sqrt(2.0)

    idx = np.arange(n)
    mirror = (-idx) % n
    if grid.dims == 1:
        half = n // 2
        out = xi.copy()
        out[half + 1 :] = np.conj(xi[1:half][::-1])
        out[0] = re[0]
        out[half] = re[half]
        return out
    # 2D: pair (i, j) with (-i, -j)
    flat_i, flat_j = np.meshgrid(idx, idx, indexing="ij")
    mi, mj = mirror[flat_i], mirror[flat_j]
    own = flat_i * n + flat_j
    par = mi * n + mj
    redundant = own > par
    xi[redundant] = np.conj(xi[mi[redundant], mj[redundant]])
    self_conj = own == par
    xi[self_conj] = re[self_conj]
    return xi


def sample_grf_values(
    kernel: KernelSpec, grid: SpectralGrid, seed: int, count: int
) -> np.ndarray:
    """Stack of ``count`` GRF samples, shape (count, *grid.shape).

    Sample ``i`` draws from an independent stream keyed by (seed, i), so
    batches are reproducible regardless of chunking or thread order.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    s = spectral_density(kernel, grid)
    root = np.sqrt(grid.npoints * s)
    out = np.empty((count,) + grid.shape)
    axes = tuple(range(grid.dims))
    for i in range(count):
        rng = np.random.default_rng((int(seed), int(i)))
        xi = hermitian_noise(grid, rng)
        f = np.fft.ifftn(root * xi, axes=axes)
        if np.abs(f.imag).max() > 1e-12 * max(1.0, np.abs(f.real).max()):
            raise AssertionError("Hermitian symmetry violated in GRF synthesis")
        out[i] = f.real
    return out


def sample_grf(
    kernel: KernelSpec, grid: SpectralGrid, seed: int, count: int
) -> list[Field]:
    """Sample ``count`` fields; deterministic for a fixed seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return [Field(grid, v) for v in sample_grf_values(kernel, grid, seed, count)]


def circulant_covariance_1d(kernel: KernelSpec, grid: SpectralGrid) -> np.ndarray:
    """Dense covariance matrix F^{-1} diag(S) F on a 1D grid (oracle helper)."""
    if grid.dims != 1:
        raise ValueError("dense covariance helper is 1D only")
    s = spectral_density(kernel, grid)
    first_row = np.fft.ifft(s).real  # row 0 of F^{-1} diag(S) F, real by symmetry
    n = grid.n
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return first_row[idx]


def normalize_range(f: Field, rng_spec: RangeSpec) -> Field:
    """Affinely map the field's min/max onto (lo, hi).

    A constant field maps to the midpoint of the target range.
    """
    vals = f.values
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-300:
        out = np.full_like(vals, 0.5 * (rng_spec.lo + rng_spec.hi))
    else:
        out = rng_spec.lo + (vals - lo) * (rng_spec.hi - rng_spec.lo) / (hi - lo)
    return Field(f.grid, out)


def zigzag(grid: SpectralGrid, n_pieces: int, seed: int) -> Field:
    """Continuous periodic piecewise-linear field with ``n_pieces`` segments.

    Knots sit at j*L/n_pieces with values uniform in [0, 1); the last
    segment wraps back to the first knot.
    """
    if grid.dims != 1:
        raise ValueError("zigzag is a 1D generator")
    if n_pieces < 2:
        raise ValueError(f"n_pieces must be >= 2, got {n_pieces}")
    rng = np.random.default_rng(seed)
    knots = rng.uniform(0.0, 1.0, size=n_pieces)
    xk = np.arange(n_pieces + 1) * (grid.length / n_pieces)
    yk = np.append(knots, knots[0])
    x = grid.coords()[0]
    return Field(grid, np.interp(x, xk, yk))
