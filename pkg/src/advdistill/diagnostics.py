"""
Attack and dataset diagnostics: perturbation averaging against the forcing
pattern, seam checks for periodicity, and spectral/enstrophy reports.
"""

from __future__ import annotations

import numpy as np

from .spectral import Field, energy_spectrum, enstrophy

__all__ = [
    "avg_perturbation",
    "correlate",
    "periodicity_check",
    "spectral_report",
]


def avg_perturbation(perturbations) -> np.ndarray:
    """Cellwise mean of a collection of perturbation arrays."""
    stack = np.stack([np.asarray(p, dtype=float) for p in perturbations])
    if len(stack) == 0:
        raise ValueError("no perturbations to average")
    return stack.mean(axis=0)


def correlate(a: np.ndarray, pattern: np.ndarray) -> float:
    """Normalized cross-correlation maximized over circular shifts, in [-1, 1].

    Both inputs are mean-removed; the shift search runs over every circular
    offset via the cross-correlation theorem.
    """
    a = np.asarray(a, dtype=float)
    p = np.asarray(pattern, dtype=float)
    if a.shape != p.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {p.shape}")
    a = a - a.mean()
    p = p - p.mean()
    na, np_ = np.linalg.norm(a), np.linalg.norm(p)
    if na == 0.0 or np_ == 0.0:
        return 0.0
    cross = np.fft.ifftn(np.fft.fftn(a) * np.conj(np.fft.fftn(p))).real
    return float(cross.max() / (na * np_))


def periodicity_check(values: np.ndarray) -> float:
    """Boundary-jump score of a 2x2 (or 1D double) periodic tiling.

    Score = max first-difference across the tile seams divided by the max
    first-difference in the interior; a score <= 1 + tol indicates the
    field continues seamlessly across the periodic boundary.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        seam = np.abs(v[-1] - v[0])
        interior = np.abs(np.diff(v)).max()
        return float(seam / interior) if interior > 0 else np.inf
    if v.ndim != 2:
        raise ValueError("periodicity check expects a 1D or 2D array")
    seam_x = np.abs(v[-1, :] - v[0, :]).max()
    seam_y = np.abs(v[:, -1] - v[:, 0]).max()
    interior = max(
        np.abs(np.diff(v, axis=0)).max(),
        np.abs(np.diff(v, axis=1)).max(),
    )
    if interior == 0.0:
        return np.inf if max(seam_x, seam_y) > 0 else 1.0
    return float(max(seam_x, seam_y) / interior)


def spectral_report(frames) -> dict:
    """Radial spectra, enstrophy series, and log-|coefficient| maps per frame.

    ``frames`` is a sequence of Fields (or arrays on a shared grid given as
    Fields). Returns arrays ready for CSV/PGM emission.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to report on")
    shells = None
    spectra = []
    series = []
    logmaps = []
    for f in frames:
        if not isinstance(f, Field):
            raise TypeError("spectral_report consumes Field frames")
        sh, power = energy_spectrum(f)
        shells = sh if shells is None else shells
        spectra.append(power)
        series.append(enstrophy(f))
        coeffs = np.fft.fftshift(np.fft.fftn(f.values))
        logmaps.append(np.log10(np.abs(coeffs) + 1e-300))
    return {
        "shells": shells,
        "spectra": np.stack(spectra),
        "enstrophy": np.asarray(series),
        "log_abs_coeffs": np.stack(logmaps),
    }
