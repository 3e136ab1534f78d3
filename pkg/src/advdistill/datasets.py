"""
Dataset construction and persistence: sample initial conditions from a
generator, label them with the solver, and store input/output pairs (plus
intermediate frames at fixed spacing for the 2D system) under a manifest.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .config import SCHEMA_VERSION, read_config, write_config
from .grf import KernelSpec, RangeSpec, normalize_range, sample_grf_values, zigzag
from .io import read_field, read_frame_stack, write_field, write_frame_stack
from .solvers import BlowupError, Field, ForcingSpec, SolverConfig, solve
from .spectral import SpectralGrid, make_grid, spectral_truncate

__all__ = ["GeneratorSpec", "Dataset", "generate_inputs", "build_dataset",
           "save_dataset", "load_dataset"]


@dataclass(frozen=True)
class GeneratorSpec:
    """Initial-condition distribution: a GRF kernel or a zigzag family.

    When ``value_range`` is set, every sample is affinely normalized onto
    it after synthesis.
    """

    kind: str = "grf"  # "grf" | "zigzag"
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("rbf"))
    value_range: RangeSpec | None = None
    n_pieces: int = 8

    def describe(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "grf":
            d.update(self.kernel.describe())
        else:
            d["n_pieces"] = self.n_pieces
        if self.value_range is not None:
            d["range_lo"] = self.value_range.lo
            d["range_hi"] = self.value_range.hi
        return d


def generate_inputs(
    gen: GeneratorSpec, grid: SpectralGrid, seed: int, count: int
) -> np.ndarray:
    """Stack of ``count`` initial conditions, shape (count, *grid.shape)."""
    if gen.kind == "grf":
        vals = sample_grf_values(gen.kernel, grid, seed, count)
    elif gen.kind == "zigzag":
        vals = np.stack(
            [zigzag(grid, gen.n_pieces, seed=hash((seed, i)) % 2**31).values
             for i in range(count)]
        ) if count else np.empty((0,) + grid.shape)
    else:
        raise ValueError(f"unknown generator kind {gen.kind!r}")
    if gen.value_range is not None:
        vals = np.stack(
            [normalize_range(Field(grid, v), gen.value_range).values for v in vals]
        ) if count else vals
    return vals


@dataclass
class Dataset:
    """In-memory labelled pairs; ``frames`` only for the 2D frame pipeline.

    ``frames[i]`` stacks the stored snapshots (initial state first, final
    state last) with shape (nframes, n, n).
    """

    grid: SpectralGrid
    inputs: np.ndarray
    outputs: np.ndarray
    frames: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.inputs)


def build_dataset(
    gen: GeneratorSpec,
    cfg: SolverConfig,
    count: int,
    seed: int,
    store_n: int | None = None,
) -> Dataset:
    """Generate ``count`` inputs and label them with the solver.

    ``store_n`` spectrally truncates stored states onto a coarser grid
    (the solver still runs at ``cfg.grid`` resolution). Solver blow-up
    propagates as :class:`BlowupError` with the offending sample index.
    """
    grid = cfg.grid
    inputs = generate_inputs(gen, grid, seed, count)
    out_grid = grid if store_n is None else make_grid(grid.dims, store_n, grid.length)

    def shrink(vals: np.ndarray) -> np.ndarray:
        if store_n is None:
            return vals
        return spectral_truncate(Field(grid, vals), store_n).values

    stored_inputs = np.empty((count,) + out_grid.shape)
    outputs = np.empty((count,) + out_grid.shape)
    frames = None
    want_frames = cfg.equation == "ns2d" and cfg.snapshot_spacing is not None
    for i in range(count):
        traj = solve(Field(grid, inputs[i]), cfg)
        if traj.blown_up:
            raise BlowupError(traj.blowup_step, f"sample {i} blew up at step {traj.blowup_step}")
        stored_inputs[i] = shrink(inputs[i])
        outputs[i] = shrink(traj.final.values)
        if want_frames:
            stack = np.stack([shrink(s.values) for s in traj.states])
            if frames is None:
                frames = np.empty((count,) + stack.shape)
            frames[i] = stack

    meta = {"count": count, "seed": seed, "equation": cfg.equation,
            "nu": cfg.nu, "dt": cfg.dt, "t_end": cfg.t_end,
            "scheme": cfg.scheme, "solver_n": grid.n}
    meta.update(gen.describe())
    return Dataset(grid=out_grid, inputs=stored_inputs, outputs=outputs,
                   frames=frames, metadata=meta)


def save_dataset(directory: str, ds: Dataset, gen: GeneratorSpec, cfg: SolverConfig) -> None:
    """Persist as a manifest plus one SGF1 file (or frame stack) per field."""
    os.makedirs(directory, exist_ok=True)
    sections: dict[str, dict] = {
        "meta": {"schema": SCHEMA_VERSION, "kind": "dataset"},
        "dataset": {"count": len(ds), "seed": ds.metadata.get("seed", 0),
                    "has_frames": ds.frames is not None,
                    "n": ds.grid.n, "dims": ds.grid.dims, "length": ds.grid.length},
        "generator": gen.describe(),
        "solver": {"equation": cfg.equation, "scheme": cfg.scheme, "nu": cfg.nu,
                   "dt": cfg.dt, "t_end": cfg.t_end, "solver_n": cfg.grid.n,
                   "forcing": cfg.forcing.pattern,
                   "forcing_amplitude": cfg.forcing.amplitude},
    }
    if cfg.snapshot_spacing is not None:
        sections["solver"]["snapshot_spacing"] = cfg.snapshot_spacing
    write_config(os.path.join(directory, "manifest.cfg"), sections)
    for i in range(len(ds)):
        write_field(os.path.join(directory, f"input_{i:05d}.sgf1"), Field(ds.grid, ds.inputs[i]))
        write_field(os.path.join(directory, f"output_{i:05d}.sgf1"), Field(ds.grid, ds.outputs[i]))
        if ds.frames is not None:
            write_frame_stack(
                os.path.join(directory, f"frames_{i:05d}.sgfs"),
                [Field(ds.grid, fr) for fr in ds.frames[i]],
            )


def load_dataset(directory: str) -> Dataset:
    manifest = read_config(os.path.join(directory, "manifest.cfg"))
    if manifest.get("meta", {}).get("schema") != SCHEMA_VERSION:
        raise ValueError(f"{directory}: missing or unsupported manifest schema")
    dsec = manifest["dataset"]
    count = int(dsec["count"])
    grid = make_grid(int(dsec["dims"]), int(dsec["n"]), float(dsec["length"]))
    has_frames = dsec.get("has_frames", "false").lower() == "true"

    inputs = np.empty((count,) + grid.shape)
    outputs = np.empty((count,) + grid.shape)
    frames = None
    for i in range(count):
        inputs[i] = read_field(os.path.join(directory, f"input_{i:05d}.sgf1")).values
        outputs[i] = read_field(os.path.join(directory, f"output_{i:05d}.sgf1")).values
        if has_frames:
            stack = read_frame_stack(os.path.join(directory, f"frames_{i:05d}.sgfs"))
            arr = np.stack([f.values for f in stack])
            if frames is None:
                frames = np.empty((count,) + arr.shape)
            frames[i] = arr
    meta = {k: v for sec in ("generator", "solver") for k, v in manifest.get(sec, {}).items()}
    meta["count"] = count
    return Dataset(grid=grid, inputs=inputs, outputs=outputs, frames=frames, metadata=meta)
