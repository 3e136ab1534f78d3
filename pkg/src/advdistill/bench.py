"""
Desk-scale presets and experiment runners: dataset/student builders for the
1D and 2D systems, the gradient-mode attack comparison, the 2D frame
ablation, the perturbation-vs-forcing diagnostic, and OOD pools.

These are the configurations the test suite and the demo scripts share;
everything is seeded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attack import (
    AttackConfig,
    Dictionary,
    TeacherAdapter,
    make_attack_loss,
    make_ns_attack_loss,
    run_attack,
    teacher_from_config,
)
from .advtrain import DistillProblem, OodPool
from .datasets import Dataset, GeneratorSpec, build_dataset, generate_inputs
from .diagnostics import avg_perturbation, correlate
from .grf import KernelSpec, RangeSpec
from .operators import (
    Fno1dArch,
    Fno2dArch,
    FnoParams,
    TrainConfig,
    fno2d_rollout,
    fno_forward,
    init_params,
    train,
)
from .solvers import ForcingSpec, SolverConfig
from .spectral import make_grid

__all__ = [
    "burgers_bench_config",
    "burgers_ood_config",
    "burgers_generator",
    "ns_desk_config",
    "ns_generator",
    "train_burgers_student",
    "train_ns_student",
    "ns_student_forward",
    "burgers_problem",
    "build_burgers_dictionary",
    "run_gradient_mode_bench",
    "ns_frame_times",
    "run_ns_attack",
    "run_frame_ablation",
    "run_perturbation_forcing",
    "build_burgers_ood_pool",
    "OOD_RANGES",
]


def burgers_generator(lo: float = 0.0, hi: float = 1.0,
                      kernel: KernelSpec | None = None) -> GeneratorSpec:
    """Training distribution: gaussian-kernel GRF, l = 0.1, range (0, 1)."""
    return GeneratorSpec(
        kind="grf",
        kernel=kernel or KernelSpec("rbf", variance=1.0, length_scale=0.1),
        value_range=RangeSpec(lo, hi),
    )


def burgers_bench_config(n: int = 256, nu: float = 5e-4, dt: float = 1e-3,
                         t_end: float = 0.1) -> SolverConfig:
    """Low-viscosity bench system for the gradient-mode comparison.

    The short pre-shock horizon keeps the input->output map smooth enough
    for a compact student to track the teacher inside the attack ball, so
    the comparison probes gradient quality rather than the student's
    off-manifold extrapolation.
    """
    return SolverConfig("burgers1d", make_grid(1, n, 1.0), nu=nu, dt=dt, t_end=t_end)


def burgers_ood_config(n: int = 128, nu: float = 1e-2, dt: float = 1e-3,
                       t_end: float = 1.0) -> SolverConfig:
    # dt sized for the fastest OOD pool (inputs up to range (0,3))
    """Diffusive system for the OOD and adversarial-training studies."""
    return SolverConfig("burgers1d", make_grid(1, n, 1.0), nu=nu, dt=dt, t_end=t_end)


def ns_generator() -> GeneratorSpec:
    return GeneratorSpec(kind="grf", kernel=KernelSpec("rbf", variance=1.0, length_scale=0.2))


def ns_desk_config(n: int = 32, forcing: str = "diagonal", amplitude: float = 0.5,
                   t_end: float = 5.0, dt: float = 0.01) -> SolverConfig:
    """Frame pipeline system: snapshots at unit spacing feed the 2D student."""
    return SolverConfig(
        "ns2d",
        make_grid(2, n, 1.0),
        nu=1e-3,
        dt=dt,
        t_end=t_end,
        snapshot_spacing=1.0,
        forcing=ForcingSpec(forcing, amplitude=amplitude),
    )


def train_burgers_student(
    cfg: SolverConfig,
    gen: GeneratorSpec,
    count: int = 320,
    epochs: int = 160,
    seed: int = 0,
    arch: Fno1dArch | None = None,
    train_cfg: TrainConfig | None = None,
) -> tuple[FnoParams, Dataset]:
    """Dataset + trained 1D student (coordinate channels off)."""
    ds = build_dataset(gen, cfg, count=count, seed=seed)
    arch = arch or Fno1dArch(n=cfg.grid.n, modes=16, width=64, layers=4)
    params = init_params(arch, seed=seed + 1)
    tc = train_cfg or TrainConfig(epochs=epochs, batch_size=20, lr=2e-3, seed=seed + 2)
    params, _ = train(params, fno_forward, ds.inputs, ds.outputs, tc)
    return params, ds


def ns_frame_times(cfg: SolverConfig, arch: Fno2dArch) -> tuple[list[float], float]:
    """(teacher input-frame times, final time) of the frame pipeline."""
    spacing = cfg.snapshot_spacing
    input_times = [spacing * (i + 1) for i in range(arch.tin - 1)]
    return input_times, cfg.t_end


def ns_student_forward(params: FnoParams, frame_stacks):
    """Training forward for the recurrent 2D student.

    ``frame_stacks`` has shape (batch, nframes, n, n) with the initial
    state first; the student sees the first tin frames and must predict
    the rest. Predictions are stacked on a leading axis to match the
    target ``frame_stacks[:, tin:]`` layout.
    """
    from . import autodiff as ad

    tin = params.arch.tin
    stacks = np.asarray(frame_stacks) if not isinstance(frame_stacks, np.ndarray) else frame_stacks
    nframes = stacks.shape[1]
    frames = [stacks[:, i] for i in range(tin)]
    preds = fno2d_rollout(params, frames, steps=nframes - tin)
    parts = [ad.reshape(p, (ad.value(p).shape[0], 1) + ad.value(p).shape[1:]) for p in preds]
    return ad.concat(parts, axis=1)


def train_ns_student(
    cfg: SolverConfig,
    gen: GeneratorSpec | None = None,
    count: int = 120,
    epochs: int = 120,
    seed: int = 0,
    arch: Fno2dArch | None = None,
    train_cfg: TrainConfig | None = None,
) -> tuple[FnoParams, Dataset]:
    """Dataset (with frames) + trained recurrent 2D student, coords off."""
    gen = gen or ns_generator()
    ds = build_dataset(gen, cfg, count=count, seed=seed)
    arch = arch or Fno2dArch(n=cfg.grid.n, tin=3, modes=8, width=20, layers=3,
                             coord_channels=False)
    params = init_params(arch, seed=seed + 1)
    tc = train_cfg or TrainConfig(epochs=epochs, batch_size=10, lr=2e-3, seed=seed + 2)
    targets = ds.frames[:, arch.tin:]
    params, _ = train(params, ns_student_forward, ds.frames, targets, tc)
    return params, ds


def burgers_problem(params: FnoParams, cfg: SolverConfig) -> DistillProblem:
    teacher = teacher_from_config(cfg)
    return DistillProblem(
        teacher=teacher,
        student_forward=fno_forward,
        student_fn_of=lambda p: (lambda a: fno_forward(p, a)),
    )


def build_burgers_dictionary(cfg: SolverConfig, gen: GeneratorSpec, size: int,
                             seed: int = 1234) -> Dictionary:
    """Teacher-labelled lookup table drawn from the declared generator."""
    ds = build_dataset(gen, cfg, count=size, seed=seed)
    return Dictionary(inputs=ds.inputs, outputs=ds.outputs)


def run_gradient_mode_bench(
    params: FnoParams,
    cfg: SolverConfig,
    gen: GeneratorSpec,
    dictionary: Dictionary,
    attack_cfg: AttackConfig,
    n_seeds: int = 10,
    input_seed: int = 500,
    modes: tuple = ("with_solver", "detached", "approximated"),
) -> dict:
    """Attack the same inputs under each gradient mode; final true losses.

    Returns {mode: array of per-input final true losses} plus the raw
    results under "results".
    """
    teacher = teacher_from_config(cfg)
    inputs = generate_inputs(gen, cfg.grid, seed=input_seed, count=n_seeds)
    student_fn = lambda a: fno_forward(params, a)
    out = {"results": {}}
    for mode in modes:
        finals = []
        results = []
        for x0 in inputs:
            evaluate = make_attack_loss(
                student_fn, teacher, mode=mode,
                dictionary=dictionary if mode == "approximated" else None,
            )
            res = run_attack(x0, evaluate, attack_cfg)
            finals.append(res.final_true_loss)
            results.append(res)
        out[mode] = np.asarray(finals)
        out["results"][mode] = results
    return out


def run_ns_attack(
    params: FnoParams,
    cfg: SolverConfig,
    x0: np.ndarray,
    attack_cfg: AttackConfig,
    frame_modes: dict | None = None,
    dictionary: Dictionary | None = None,
):
    evaluate = make_ns_attack_loss(params, cfg, x0, frame_modes=frame_modes,
                                   dictionary=dictionary)
    return run_attack(np.asarray(x0, dtype=float), evaluate, attack_cfg)


def run_frame_ablation(
    params: FnoParams,
    cfg: SolverConfig,
    inputs: np.ndarray,
    attack_cfg: AttackConfig,
    variants: dict | None = None,
) -> dict:
    """Attack each input under several per-frame mode maps.

    Default variants: full backpropagation, everything detached, and the
    final frame frozen at its unperturbed value. Returns per-variant arrays
    of (initial loss, final loss) pairs.
    """
    _, final_time = ns_frame_times(cfg, params.arch)
    if variants is None:
        variants = {
            "with_solver": {},
            "detached": "all_detached",
            "final_constant": {final_time: "constant"},
        }
    out = {}
    for name, fm in variants.items():
        if fm == "all_detached":
            input_times, ft = ns_frame_times(cfg, params.arch)
            fm = {t: "detached" for t in input_times}
            fm[ft] = "detached"
        pairs = []
        for x0 in inputs:
            res = run_ns_attack(params, cfg, x0, attack_cfg, frame_modes=fm)
            pairs.append((float(res.true_losses[0]), res.final_true_loss))
        out[name] = np.asarray(pairs)
    return out


def run_perturbation_forcing(
    params: FnoParams,
    cfg: SolverConfig,
    inputs: np.ndarray,
    attack_cfg: AttackConfig,
    pattern: np.ndarray,
) -> dict:
    """Average the attack perturbations and correlate with a forcing pattern."""
    perturbations = []
    for x0 in inputs:
        res = run_ns_attack(params, cfg, x0, attack_cfg)
        perturbations.append(res.perturbation)
    mean_pert = avg_perturbation(perturbations)
    return {
        "mean_perturbation": mean_pert,
        "correlation": correlate(mean_pert, pattern),
        "count": len(perturbations),
    }


OOD_RANGES: tuple = (
    ("range_0_0.5", 0.0, 0.5),
    ("range_0_1", 0.0, 1.0),
    ("range_0_2", 0.0, 2.0),
    ("range_0_3", 0.0, 3.0),
    ("range_-1_0", -1.0, 0.0),
    ("range_-1.5_-1", -1.5, -1.0),
    ("range_-0.5_0.5", -0.5, 0.5),
)


@dataclass
class BurgersOodSpec:
    """One OOD pool entry: a generator plus a tag."""

    name: str
    gen: GeneratorSpec
    tag: str = "ood"


def default_burgers_ood_specs(include_kernels: bool = True) -> list[BurgersOodSpec]:
    specs = [
        BurgersOodSpec(name, burgers_generator(lo, hi), tag="range")
        for name, lo, hi in OOD_RANGES
    ]
    if include_kernels:
        specs += [
            BurgersOodSpec(
                "matern_nu1.5_l0.1",
                burgers_generator(0.0, 1.0, KernelSpec("matern", length_scale=0.1, matern_nu=1.5)),
                tag="kernel",
            ),
            BurgersOodSpec(
                "rbf_l0.05",
                burgers_generator(0.0, 1.0, KernelSpec("rbf", length_scale=0.05)),
                tag="kernel",
            ),
            BurgersOodSpec(
                "rbf_l0.2",
                burgers_generator(0.0, 1.0, KernelSpec("rbf", length_scale=0.2)),
                tag="kernel",
            ),
            BurgersOodSpec(
                "zigzag_8",
                GeneratorSpec(kind="zigzag", n_pieces=8, value_range=RangeSpec(0.0, 1.0)),
                tag="kernel",
            ),
        ]
    return specs


def build_burgers_ood_pool(
    cfg: SolverConfig,
    count: int = 24,
    seed: int = 900,
    specs: list[BurgersOodSpec] | None = None,
    include_train_tag: bool = True,
) -> OodPool:
    """Teacher-labelled OOD pool; the training distribution carries tag "train"."""
    pool = OodPool()
    if include_train_tag:
        ds = build_dataset(burgers_generator(), cfg, count=count, seed=seed + 7919)
        ds.metadata["tag"] = "train"
        pool.add("train_dist", ds)
    for i, spec in enumerate(specs or default_burgers_ood_specs()):
        ds = build_dataset(spec.gen, cfg, count=count, seed=seed + i)
        ds.metadata["tag"] = spec.tag
        pool.add(spec.name, ds)
    return pool
