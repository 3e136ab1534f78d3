"""
Discrepancy functionals between student and teacher outputs.

The mse family and hard DTW are plain numpy; ``*_var`` builders assemble
the same quantities from autodiff primitives so attacks and training can
differentiate them. Soft-DTW delegates to the fused autodiff primitive.
MSE is the training default; relative L2 is reported as a metric only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

__all__ = [
    "LossSpec",
    "mse",
    "rmse",
    "mae",
    "relative_l2",
    "mse_var",
    "softdtw_var",
    "dtw_hard",
    "softdtw",
    "make_loss",
]

_LOSS_IDS = ("mse", "rmse", "mae", "softdtw", "relative_l2")


@dataclass(frozen=True)
class LossSpec:
    id: str = "mse"
    gamma: float = 0.01  # soft-DTW smoothing

    def __post_init__(self) -> None:
        if self.id not in _LOSS_IDS:
            raise ValueError(f"unknown loss id {self.id!r}")
        if self.id == "softdtw" and not self.gamma > 0:
            raise ValueError("softdtw needs gamma > 0")


def mse(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.mean((a - b) ** 2))


def rmse(a, b) -> float:
    return float(np.sqrt(mse(a, b)))


def mae(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.mean(np.abs(a - b)))


def relative_l2(a, b) -> float:
    """||a - b|| / ||b||; reported metric, never a training objective here."""
    a, b = np.asarray(a), np.asarray(b)
    denom = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / (denom if denom > 0 else 1.0))


def mse_var(pred, target):
    """Differentiable mean squared error (either argument may be a Var)."""
    diff = ad.sub(pred, target)
    return ad.reduce_mean(ad.mul(diff, diff))


def softdtw_var(pred, target, gamma: float):
    """Differentiable soft-DTW (1D sequences)."""
    return ad.softdtw(pred, target, gamma)


def make_loss(spec: LossSpec):
    """Differentiable loss builder: (pred, target) -> scalar Var/ndarray."""
    if spec.id == "mse":
        return mse_var
    if spec.id == "softdtw":
        return lambda p, t: softdtw_var(p, t, spec.gamma)
    raise ValueError(f"loss {spec.id!r} is a reporting metric, not a training objective")


def dtw_hard(x, y) -> float:
    """Classical dynamic time warping with squared-Euclidean local cost.

    O(n*m) dynamic program over monotone alignment paths.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.ndim == 1:
        dist = (x[:, None] - y[None, :]) ** 2
    else:
        diff = x[:, None, :] - y[None, :, :]
        dist = np.sum(diff * diff, axis=-1)
    n, m = dist.shape
    dp = np.full((n + 1, m + 1), np.inf)
    dp[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dp[i, j] = dist[i - 1, j - 1] + min(
                dp[i - 1, j], dp[i, j - 1], dp[i - 1, j - 1]
            )
    return float(dp[n, m])


def softdtw(x, y, gamma: float) -> float:
    """Soft-DTW value on plain arrays (see autodiff.softdtw for gradients)."""
    return float(ad.value(ad.softdtw(np.asarray(x, float), np.asarray(y, float), gamma)))
