"""
Shared fixtures. Trained students are expensive, so they are built once per
session and cached as SGNO checkpoints in pytest's cache directory; bump
_CACHE_TAG to invalidate after changing a preset.
"""

from __future__ import annotations

import os

import numpy as np
import pytest

from advdistill import bench
from advdistill.datasets import build_dataset
from advdistill.operators import Fno2dArch, TrainConfig, load_checkpoint, save_checkpoint

_CACHE_TAG = "v2"


def _cached_student(request, name: str, builder):
    cache_dir = request.config.cache.mkdir(f"advdistill-{_CACHE_TAG}")
    path = os.path.join(str(cache_dir), f"{name}.sgno")
    if os.path.exists(path):
        return load_checkpoint(path)
    params = builder()
    save_checkpoint(path, params)
    return params


@pytest.fixture(scope="session")
def burgers_bench_cfg():
    return bench.burgers_bench_config()


@pytest.fixture(scope="session")
def burgers_ood_cfg():
    return bench.burgers_ood_config()


@pytest.fixture(scope="session")
def bench_student(request, burgers_bench_cfg):
    """FNO-1D trained on the low-viscosity bench system (n=256, nu=5e-4)."""

    def build():
        params, _ = bench.train_burgers_student(
            burgers_bench_cfg, bench.burgers_generator(), count=400, epochs=160, seed=0
        )
        return params

    return _cached_student(request, "burgers_bench_fno1d", build)


@pytest.fixture(scope="session")
def ood_student(request, burgers_ood_cfg):
    """FNO-1D trained on the diffusive system (n=128, nu=1e-2)."""

    def build():
        params, _ = bench.train_burgers_student(
            burgers_ood_cfg, bench.burgers_generator(), count=320, epochs=140, seed=3
        )
        return params

    return _cached_student(request, "burgers_ood_fno1d", build)


_NS_ARCH = Fno2dArch(n=32, tin=3, modes=8, width=16, layers=3, coord_channels=False)
_NS_TRAIN = TrainConfig(epochs=160, batch_size=10, lr=2e-3, seed=11)
_NS_TRAIN_CONTROL = TrainConfig(epochs=80, batch_size=10, lr=2e-3, seed=11)


@pytest.fixture(scope="session")
def ns_cfg():
    return bench.ns_desk_config()


@pytest.fixture(scope="session")
def ns_cfg_unforced():
    return bench.ns_desk_config(forcing="none")


@pytest.fixture(scope="session")
def ns_student(request, ns_cfg):
    """Recurrent FNO-2D trained on the diagonally forced desk system."""

    def build():
        params, _ = bench.train_ns_student(
            ns_cfg, count=140, seed=5, arch=_NS_ARCH, train_cfg=_NS_TRAIN
        )
        return params

    return _cached_student(request, "ns_diagonal_fno2d", build)


@pytest.fixture(scope="session")
def ns_student_unforced(request, ns_cfg_unforced):
    """Recurrent FNO-2D trained with no external forcing (control)."""

    def build():
        params, _ = bench.train_ns_student(
            ns_cfg_unforced, count=100, seed=6, arch=_NS_ARCH, train_cfg=_NS_TRAIN_CONTROL
        )
        return params

    return _cached_student(request, "ns_none_fno2d", build)


@pytest.fixture(scope="session")
def ns_dataset(ns_cfg):
    return build_dataset(bench.ns_generator(), ns_cfg, count=24, seed=42)


@pytest.fixture(scope="session")
def ns_dataset_unforced(ns_cfg_unforced):
    return build_dataset(bench.ns_generator(), ns_cfg_unforced, count=24, seed=43)


@pytest.fixture(scope="session")
def burgers_ood_dataset(burgers_ood_cfg):
    return build_dataset(bench.burgers_generator(), burgers_ood_cfg, count=48, seed=21)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
