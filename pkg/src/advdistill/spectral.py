"""
Periodic-grid Fourier infrastructure shared by every other module.

Transform normalization (fixed throughout the package): the forward
transform is unscaled and the inverse divides by the total point count,
i.e. numpy's default convention. Under it, Parseval reads

    mean(u**2) = (1/M**2) * sum_k |u_hat_k|**2        (M = total points)

where the sum runs over the *full* spectrum; for the half-complex storage
used by :class:`Spectrum`, modes that drop their conjugate twin along the
last axis count twice (see :func:`spectrum_power`).

Real fields are stored in half-complex layout: a real-input transform
along the last axis, with the redundant conjugate half dropped. For 2D
grids the first axis keeps the full wavenumber range in FFT order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectralGrid",
    "Field",
    "Spectrum",
    "make_grid",
    "fft_forward",
    "fft_inverse",
    "spectral_derivative",
    "poisson_stream",
    "velocity_from_stream",
    "dealias",
    "spectral_upsample",
    "spectral_truncate",
    "enstrophy",
    "energy_spectrum",
    "spectrum_power",
]


@dataclass(frozen=True)
class SpectralGrid:
    """Precomputed wavenumbers, squared-wavenumber array and dealias mask.

    Parameters
    ----------
    dims : int
        1 or 2.
    n : int
        Points per axis (even, >= 8); square grids only in 2D.
    length : float
        Domain length per axis.

    Attributes
    ----------
    k_full : tuple of int arrays
        Per-axis integer wavenumbers in FFT order, spanning
        {-n/2, ..., n/2 - 1}.
    kx, ky : ndarray
        Integer wavenumbers broadcastable over the half-complex layout
        (``ky`` only for 2D; the last axis holds modes 0..n/2).
    k2 : ndarray
        sum over axes of (2*pi*k/L)**2, half-complex layout.
    k2_safe : ndarray
        Copy of ``k2`` with the zero mode set to 1 for safe division.
    dealias_mask : ndarray of bool
        True iff |k_axis| <= floor(n/3) on every axis (2/3 rule).
    """

    dims: int
    n: int
    length: float
    k_full: tuple = field(init=False, repr=False, compare=False)
    kx: np.ndarray = field(init=False, repr=False, compare=False)
    ky: np.ndarray | None = field(init=False, repr=False, compare=False)
    k2: np.ndarray = field(init=False, repr=False, compare=False)
    k2_safe: np.ndarray = field(init=False, repr=False, compare=False)
    dealias_mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.dims not in (1, 2):
            raise ValueError(f"dims must be 1 or 2, got {self.dims}")
        if self.n % 2 != 0 or self.n < 8:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

        n, L = self.n, self.length
        k1 = np.rint(np.fft.fftfreq(n) * n).astype(np.int64)   # 0..n/2-1, -n/2..-1
        kh = np.arange(n // 2 + 1, dtype=np.int64)             # rfft last axis
        cutoff = n // 3
        scale2 = (2.0 * np.pi / L) ** 2

        if self.dims == 1:
            kx = kh
            ky = None
            k2 = scale2 * kx.astype(float) ** 2
            mask = np.abs(kx) <= cutoff
            k_full = (k1,)
        else:
            kx = k1[:, None]
            ky = kh[None, :]
            k2 = scale2 * (kx.astype(float) ** 2 + ky.astype(float) ** 2)
            mask = (np.abs(kx) <= cutoff) & (np.abs(ky) <= cutoff)
            k_full = (k1, k1)

        k2_safe = k2.copy()
        k2_safe[(0,) * self.dims] = 1.0

        object.__setattr__(self, "k_full", k_full)
        object.__setattr__(self, "kx", kx)
        object.__setattr__(self, "ky", ky)
        object.__setattr__(self, "k2", k2)
        object.__setattr__(self, "k2_safe", k2_safe)
        object.__setattr__(self, "dealias_mask", mask)

    @property
    def shape(self) -> tuple[int, ...]:
        """Physical-space array shape."""
        return (self.n,) * self.dims

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        """Half-complex array shape."""
        return (self.n,) * (self.dims - 1) + (self.n // 2 + 1,)

    @property
    def npoints(self) -> int:
        return self.n**self.dims

    @property
    def cell_volume(self) -> float:
        return (self.length / self.n) ** self.dims

    def coords(self) -> tuple[np.ndarray, ...]:
        """Per-axis coordinate arrays, x_j = j*L/n."""
        x = np.arange(self.n) * (self.length / self.n)
        return (x,) * self.dims


@dataclass(frozen=True)
class Field:
    """Real function samples on a periodic grid."""

    grid: SpectralGrid
    values: np.ndarray
    blown_up: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not self.blown_up and not np.isfinite(values).all():
            raise ValueError("field contains non-finite values (not flagged blown up)")


@dataclass(frozen=True)
class Spectrum:
    """Half-complex Fourier coefficients of a real field."""

    grid: SpectralGrid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        object.__setattr__(self, "coeffs", coeffs)
        if coeffs.shape != self.grid.spectral_shape:
            raise ValueError(
                f"spectrum shape {coeffs.shape} does not match grid "
                f"{self.grid.spectral_shape}"
            )


def make_grid(dims: int, n: int, length: float) -> SpectralGrid:
    """Build a periodic grid with precomputed wavenumbers and 2/3 mask."""
    return SpectralGrid(dims=dims, n=n, length=length)


def fft_forward(f: Field) -> Spectrum:
    """Real-to-half-complex forward transform (unscaled)."""
    if not np.isfinite(f.values).all():
        raise ValueError("cannot transform a non-finite field")
    return Spectrum(f.grid, np.fft.rfftn(f.values))


def fft_inverse(s: Spectrum) -> Field:
    """Half-complex-to-real inverse transform (divides by point count)."""
    return Field(s.grid, np.fft.irfftn(s.coeffs, s=s.grid.shape, axes=tuple(range(s.grid.dims))))


def _derivative_factor(grid: SpectralGrid, axis: int, order: int) -> np.ndarray:
    """(i*2*pi*k/L)**order along one axis, Nyquist zeroed for odd orders."""
    n, L = grid.n, grid.length
    if grid.dims == 1:
        k = grid.kx.astype(float)
    else:
        k = (grid.kx if axis == 0 else grid.ky).astype(float)
    fac = (1j * 2.0 * np.pi / L * k) ** order
    if order % 2 == 1:
        # k = -n/2 has no conjugate partner; keeping it would make the
        # derivative of a real field complex.
        fac = np.where(np.abs(k) == n // 2, 0.0, fac)
    return fac


def spectral_derivative(s: Spectrum, axis: int = 0, order: int = 1) -> Spectrum:
    """Differentiate along ``axis``: multiply each mode by (i*2*pi*k/L)**order."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if not 0 <= axis < s.grid.dims:
        raise ValueError(f"axis {axis} out of range for {s.grid.dims}D grid")
    return Spectrum(s.grid, s.coeffs * _derivative_factor(s.grid, axis, order))


def poisson_stream(omega_hat: Spectrum) -> Spectrum:
    """Streamfunction spectrum solving -lap(psi) = omega: psi_hat = omega_hat / k^2.

    The zero mode of psi is forced to 0 (a constant offset in psi carries
    no velocity). With u = d(psi)/dy and v = -d(psi)/dx this reproduces
    omega = dv/dx - du/dy.
    """
    grid = omega_hat.grid
    if grid.dims != 2:
        raise ValueError("poisson_stream requires a 2D grid")
    psi = omega_hat.coeffs / grid.k2_safe
    psi[0, 0] = 0.0
    return Spectrum(grid, psi)


def velocity_from_stream(psi_hat: Spectrum) -> tuple[Spectrum, Spectrum]:
    """Velocity (u, v) = (d psi/dy, -d psi/dx), discretely divergence-free."""
    u_hat = spectral_derivative(psi_hat, axis=1, order=1)
    v_hat = spectral_derivative(psi_hat, axis=0, order=1)
    return u_hat, Spectrum(psi_hat.grid, -v_hat.coeffs)


def dealias(s: Spectrum) -> Spectrum:
    """Zero every mode outside the 2/3-rule mask."""
    return Spectrum(s.grid, np.where(s.grid.dealias_mask, s.coeffs, 0.0))


def spectral_upsample(f: Field, new_n: int) -> Field:
    """Resample onto a finer grid by zero-padding the spectrum.

    Values at coincident points match the original; the energy content
    below the original Nyquist is untouched.
    """
    grid = f.grid
    if new_n < grid.n:
        raise ValueError(f"cannot downsample: new_n={new_n} < n={grid.n}")
    if new_n % 2 != 0:
        raise ValueError(f"new_n must be even, got {new_n}")
    if new_n == grid.n:
        return Field(grid, f.values.copy())

    big = make_grid(grid.dims, new_n, grid.length)
    src = np.fft.fftn(f.values)
    dst = np.zeros(big.shape, dtype=np.complex128)
    half = grid.n // 2
    if grid.dims == 1:
        dst[: half + 1] = src[: half + 1]
        dst[-(half - 1):] = src[-(half - 1):]
        # splitting the Nyquist mode between +n/2 and -n/2 keeps the
        # upsampled field real and the coincident-point values exact
        dst[half] *= 0.5
        dst[new_n - half] = dst[half]
    else:
        idx = np.concatenate([np.arange(half + 1), np.arange(-(half - 1), 0)])
        sl = np.ix_(idx % new_n, idx % new_n)
        dst[sl] = src[np.ix_(idx % grid.n, idx % grid.n)]
        for ax in range(2):
            pos = [slice(None)] * 2
            neg = [slice(None)] * 2
            pos[ax] = half
            neg[ax] = new_n - half
            dst[tuple(pos)] *= 0.5
            dst[tuple(neg)] = dst[tuple(pos)]
    scale = (new_n / grid.n) ** grid.dims
    out = np.fft.ifftn(dst).real * scale
    return Field(big, out)


def spectral_truncate(f: Field, new_n: int) -> Field:
    """Project onto a coarser grid by dropping modes above the new Nyquist."""
    grid = f.grid
    if new_n > grid.n:
        raise ValueError(f"cannot truncate upward: new_n={new_n} > n={grid.n}")
    if new_n % 2 != 0:
        raise ValueError(f"new_n must be even, got {new_n}")
    if new_n == grid.n:
        return Field(grid, f.values.copy())
    small = make_grid(grid.dims, new_n, grid.length)
    src = np.fft.fftn(f.values)
    half = new_n // 2
    # the coarse grid cannot distinguish +half from -half: both sample to
    # (-1)^j, so their fine-grid contributions fold into one bin
    idx = np.concatenate([np.arange(half), np.arange(-half, 0)])
    if grid.dims == 1:
        dst = src[idx % grid.n]
        dst[half] += src[half % grid.n]
    else:
        dst = src[np.ix_(idx % grid.n, idx % grid.n)]
        dst[half, :] += src[np.ix_([half % grid.n], idx % grid.n)][0]
        dst[:, half] += src[np.ix_(idx % grid.n, [half % grid.n])][:, 0]
        dst[half, half] += src[half % grid.n, half % grid.n]
    out = np.fft.ifftn(dst).real * (new_n / grid.n) ** grid.dims
    return Field(small, out)


def enstrophy(f: Field) -> float:
    """Grid-mean of the squared field times the domain volume."""
    return float(np.mean(f.values**2) * f.grid.length**f.grid.dims)


def spectrum_power(s: Spectrum) -> np.ndarray:
    """|coeff|**2 with conjugate-half weights, summing to the full-spectrum power.

    Modes strictly inside the last axis (0 < k < n/2) represent two modes of
    the full spectrum and are weighted by 2.
    """
    w = np.ones(s.grid.spectral_shape)
    sl = [slice(None)] * s.grid.dims
    sl[-1] = slice(1, -1)
    w[tuple(sl)] = 2.0
    return w * np.abs(s.coeffs) ** 2


def energy_spectrum(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Radial |k|-shell profile of the field's spectral power.

    Returns
    -------
    shells : int ndarray
        Integer shell radii 0..kmax.
    power : ndarray
        Power per shell; sums to M**2 * mean(f**2) under the package
        normalization (Parseval).
    """
    grid = f.grid
    s = fft_forward(f)
    p = spectrum_power(s)
    if grid.dims == 1:
        radius = np.abs(grid.kx)
    else:
        radius = np.rint(np.sqrt(grid.kx.astype(float) ** 2 + grid.ky.astype(float) ** 2)).astype(np.int64)
        radius = np.broadcast_to(radius, grid.spectral_shape)
    nshell = int(radius.max()) + 1
    power = np.bincount(radius.ravel(), weights=p.ravel(), minlength=nshell)
    return np.arange(nshell), power
