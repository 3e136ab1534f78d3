"""
Command-line entry points. Each subcommand reads one strict config file
(see the annotated examples in the README), writes its artifacts plus a
run manifest, and exits 0 on success or nonzero with a JSON error line on
stderr.

Subcommands: gen-data, train, attack, adv-train, eval-ood, diagnose.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .advtrain import (
    AdvTrainConfig,
    OodPool,
    batch_by_batch,
    eval_ood,
    ood_table_csv,
    random_constant_baseline,
    round_by_round,
)
from .attack import (
    AttackConfig,
    Dictionary,
    attack_result_csv,
    make_attack_loss,
    make_ns_attack_loss,
    run_attack,
    teacher_from_config,
)
from .bench import burgers_problem
from .config import SCHEMA_VERSION, ConfigError, read_config, validate_config, write_config
from .datasets import GeneratorSpec, build_dataset, load_dataset, save_dataset
from .diagnostics import avg_perturbation, correlate, periodicity_check, spectral_report
from .grf import KernelSpec, RangeSpec
from .io import atomic_write_text, read_field, write_field, write_pgm
from .losses import LossSpec
from .operators import (
    DeepOnetArch,
    Fno1dArch,
    Fno2dArch,
    TrainConfig,
    fno_forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .solvers import ForcingSpec, SolverConfig, forcing_pattern
from .spectral import Field, make_grid

_GRID = {"dims": ("int", True, None), "n": ("int", True, None),
         "length": ("float", False, 1.0)}
_SOLVER = {
    "equation": ("str", True, None),
    "scheme": ("str", False, "ab2cn"),
    "nu": ("float", True, None),
    "dt": ("float", True, None),
    "t_end": ("float", True, None),
    "snapshot_spacing": ("float", False, None),
    "forcing": ("str", False, "none"),
    "forcing_amplitude": ("float", False, 0.1),
}
_KERNEL = {
    "family": ("str", False, "rbf"),
    "variance": ("float", False, 1.0),
    "length_scale": ("float", False, 0.1),
    "matern_nu": ("float", False, 1.5),
    "rq_alpha": ("float", False, 1.0),
    "period": ("float", False, 0.5),
    "mixture": ("json", False, None),
}
_GENERATOR = {
    "kind": ("str", False, "grf"),
    "n_pieces": ("int", False, 8),
    "range_lo": ("float", False, None),
    "range_hi": ("float", False, None),
}
_TRAIN = {
    "epochs": ("int", True, None),
    "batch_size": ("int", False, 20),
    "lr": ("float", False, 1e-3),
    "beta1": ("float", False, 0.9),
    "beta2": ("float", False, 0.999),
    "eps": ("float", False, 1e-8),
    "seed": ("int", False, 0),
    "loss": ("str", False, "mse"),
    "softdtw_gamma": ("float", False, 0.01),
}
_ATTACK = {
    "norm": ("str", False, "l2"),
    "epsilon": ("float", True, None),
    "alpha": ("float", True, None),
    "steps": ("int", True, None),
    "adam": ("bool", False, False),
    "beta1": ("float", False, 0.9),
    "beta2": ("float", False, 0.999),
    "adam_eps": ("float", False, 1e-8),
    "delta_stab": ("float", False, 1e-12),
    "random_start": ("bool", False, False),
    "seed": ("int", False, 0),
    "clip_min": ("float", False, None),
    "clip_max": ("float", False, None),
    "gradient_mode": ("str", False, "with_solver"),
    "frame_modes": ("json", False, None),
    "dictionary_dir": ("str", False, None),
    "indices": ("json", False, None),
}


def _fail(message: str, code: int = 2) -> int:
    sys.stderr.write(json.dumps({"error": message}) + "\n")
    return code


def _grid_from(cfgsec: dict):
    return make_grid(cfgsec["dims"], cfgsec["n"], cfgsec["length"])


def _solver_from(sec: dict, grid) -> SolverConfig:
    return SolverConfig(
        equation=sec["equation"],
        grid=grid,
        nu=sec["nu"],
        dt=sec["dt"],
        t_end=sec["t_end"],
        scheme=sec["scheme"],
        snapshot_spacing=sec["snapshot_spacing"],
        forcing=ForcingSpec(sec["forcing"], amplitude=sec["forcing_amplitude"]),
    )


def _kernel_from(sec: dict) -> KernelSpec:
    kw = dict(sec)
    mixture = kw.pop("mixture", None)
    if mixture is not None:
        kw["mixture"] = tuple(tuple(c) for c in mixture)
    else:
        kw.pop("mixture", None)
    return KernelSpec(**{k: v for k, v in kw.items() if v is not None})


def _generator_from(gsec: dict, ksec: dict) -> GeneratorSpec:
    vr = None
    if gsec["range_lo"] is not None or gsec["range_hi"] is not None:
        if gsec["range_lo"] is None or gsec["range_hi"] is None:
            raise ConfigError("range_lo and range_hi must be given together")
        vr = RangeSpec(gsec["range_lo"], gsec["range_hi"])
    return GeneratorSpec(kind=gsec["kind"], kernel=_kernel_from(ksec),
                         value_range=vr, n_pieces=gsec["n_pieces"])


def _train_cfg_from(sec: dict) -> TrainConfig:
    return TrainConfig(
        epochs=sec["epochs"], batch_size=sec["batch_size"], lr=sec["lr"],
        beta1=sec["beta1"], beta2=sec["beta2"], eps=sec["eps"], seed=sec["seed"],
        loss=LossSpec(sec["loss"], gamma=sec["softdtw_gamma"]),
    )


def _attack_cfg_from(sec: dict) -> AttackConfig:
    return AttackConfig(
        epsilon=sec["epsilon"], alpha=sec["alpha"], steps=sec["steps"],
        norm=sec["norm"], adam=sec["adam"], beta1=sec["beta1"],
        beta2=sec["beta2"], adam_eps=sec["adam_eps"], delta_stab=sec["delta_stab"],
        random_start=sec["random_start"], seed=sec["seed"],
        clip_min=sec["clip_min"], clip_max=sec["clip_max"],
        gradient_mode=sec["gradient_mode"],
    )


def _write_manifest(out_dir: str, command: str, cfg_path: str, artifacts: list,
                    timings: dict | None = None, seeds: dict | None = None) -> None:
    with open(cfg_path, "r", encoding="utf-8") as fh:
        snapshot = fh.read()
    sections = {
        "meta": {"schema": SCHEMA_VERSION, "kind": "run-manifest"},
        "run": {"command": command, "config_path": os.path.abspath(cfg_path)},
        "artifacts": {f"a{i}": p for i, p in enumerate(artifacts)},
    }
    if seeds:
        sections["seeds"] = seeds
    if timings:
        sections["timings"] = {k: f"{v:.6f}" for k, v in timings.items()}
    write_config(os.path.join(out_dir, "run_manifest.cfg"), sections)
    atomic_write_text(os.path.join(out_dir, "config_snapshot.cfg"), snapshot)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(cfg_path: str) -> int:
    schema = {
        "dataset": {"count": ("int", True, None), "seed": ("int", False, 0),
                    "out_dir": ("str", True, None), "store_n": ("int", False, None)},
        "grid": _GRID, "solver": _SOLVER, "kernel": _KERNEL, "generator": _GENERATOR,
    }
    sec = validate_config(read_config(cfg_path), schema)
    grid = _grid_from(sec["grid"])
    solver = _solver_from(sec["solver"], grid)
    gen = _generator_from(sec["generator"], sec["kernel"])
    ds = build_dataset(gen, solver, count=sec["dataset"]["count"],
                       seed=sec["dataset"]["seed"], store_n=sec["dataset"]["store_n"])
    out = sec["dataset"]["out_dir"]
    save_dataset(out, ds, gen, solver)
    arts = sorted(os.listdir(out))
    _write_manifest(out, "gen-data", cfg_path, arts,
                    seeds={"dataset": sec["dataset"]["seed"]})
    print(f"gen-data: wrote {len(ds)} samples to {out}")
    return 0


_MODEL = {
    "arch": ("str", True, None),
    "n": ("int", False, None),
    "modes": ("int", False, 16),
    "width": ("int", False, 64),
    "layers": ("int", False, 4),
    "tin": ("int", False, 10),
    "coord_channels": ("bool", False, False),
    "latent": ("int", False, 64),
    "depth": ("int", False, 3),
    "normalize": ("bool", False, False),
    "seed": ("int", False, 0),
    "checkpoint": ("str", False, None),
}


def cmd_train(cfg_path: str) -> int:
    schema = {
        "data": {"dir": ("str", True, None)},
        "model": _MODEL,
        "train": _TRAIN,
        "output": {"checkpoint": ("str", True, None), "out_dir": ("str", True, None)},
    }
    sec = validate_config(read_config(cfg_path), schema)
    ds = load_dataset(sec["data"]["dir"])
    m = sec["model"]
    n = m["n"] or ds.grid.n
    if m["arch"] == "fno1d":
        arch = Fno1dArch(n=n, modes=m["modes"], width=m["width"], layers=m["layers"],
                         coord_channels=m["coord_channels"])
        forward = fno_forward
        inputs, targets = ds.inputs, ds.outputs
    elif m["arch"] == "fno2d":
        from .bench import ns_student_forward

        arch = Fno2dArch(n=n, tin=m["tin"], modes=m["modes"], width=m["width"],
                         layers=m["layers"], coord_channels=m["coord_channels"])
        forward = ns_student_forward
        if ds.frames is None:
            raise ConfigError("fno2d training needs a dataset with frame stacks")
        inputs, targets = ds.frames, ds.frames[:, arch.tin :]
    elif m["arch"] == "deeponet":
        from .operators import deeponet_forward

        arch = DeepOnetArch(n_sensors=n, latent=m["latent"], width=m["width"],
                            depth=m["depth"])
        forward = lambda p, x: deeponet_forward(p, x)
        inputs, targets = ds.inputs, ds.outputs
    else:
        raise ConfigError(f"unknown arch {m['arch']!r}")

    normalizer = None
    if m["normalize"]:
        from .operators import Normalizer

        normalizer = Normalizer.fit(inputs, targets)
    params = init_params(arch, seed=m["seed"], normalizer=normalizer) \
        if m["arch"] != "deeponet" else init_params(arch, seed=m["seed"])
    tc = _train_cfg_from(sec["train"])
    params, history = train(params, forward, inputs, targets, tc)

    out_dir = sec["output"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    ckpt = sec["output"]["checkpoint"]
    save_checkpoint(ckpt, params)
    hist_csv = os.path.join(out_dir, "history.csv")
    lines = ["epoch,train_loss"] + [f"{h['epoch']},{h['train_loss']:.17g}" for h in history]
    atomic_write_text(hist_csv, "\n".join(lines) + "\n")
    _write_manifest(out_dir, "train", cfg_path, [ckpt, hist_csv],
                    seeds={"model": m["seed"], "train": tc.seed})
    print(f"train: final loss {history[-1]['train_loss']:.6g}, checkpoint {ckpt}")
    return 0


def cmd_attack(cfg_path: str) -> int:
    schema = {
        "data": {"dir": ("str", True, None)},
        "model": {"checkpoint": ("str", True, None)},
        "grid": _GRID, "solver": _SOLVER, "attack": _ATTACK,
        "output": {"out_dir": ("str", True, None)},
    }
    sec = validate_config(read_config(cfg_path), schema)
    ds = load_dataset(sec["data"]["dir"])
    params = load_checkpoint(sec["model"]["checkpoint"])
    grid = _grid_from(sec["grid"])
    solver = _solver_from(sec["solver"], grid)
    acfg = _attack_cfg_from(sec["attack"])
    out_dir = sec["output"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)

    dictionary = None
    if sec["attack"]["dictionary_dir"]:
        dd = load_dataset(sec["attack"]["dictionary_dir"])
        dictionary = Dictionary(inputs=dd.inputs, outputs=dd.outputs, frames=dd.frames)

    indices = sec["attack"]["indices"] or list(range(min(4, len(ds))))
    artifacts = []
    timings_total: dict = {}
    for idx in indices:
        x0 = ds.inputs[idx]
        if solver.equation == "ns2d":
            frame_modes = sec["attack"]["frame_modes"]
            fm = None if frame_modes is None else {float(k): v for k, v in frame_modes.items()}
            evaluate = make_ns_attack_loss(params, solver, x0, frame_modes=fm,
                                           dictionary=dictionary)
        else:
            evaluate = make_attack_loss(
                lambda a: fno_forward(params, a), teacher_from_config(solver),
                mode=acfg.gradient_mode, dictionary=dictionary,
            )
        res = run_attack(x0, evaluate, acfg)
        for k, v in res.timings.items():
            timings_total[k] = timings_total.get(k, 0.0) + v
        curve = os.path.join(out_dir, f"losses_{idx:05d}.csv")
        atomic_write_text(curve, attack_result_csv(res))
        pert = os.path.join(out_dir, f"perturbation_{idx:05d}.sgf1")
        write_field(pert, Field(ds.grid, res.perturbation))
        fin = os.path.join(out_dir, f"perturbed_{idx:05d}.sgf1")
        write_field(fin, Field(ds.grid, res.x_final))
        artifacts += [curve, pert, fin]
        if ds.grid.dims == 2:
            pgm = os.path.join(out_dir, f"perturbation_{idx:05d}.pgm")
            write_pgm(pgm, res.perturbation)
            artifacts.append(pgm)
        print(f"attack[{idx}]: loss {res.true_losses[0]:.6g} -> {res.final_true_loss:.6g}"
              f"{' (frozen)' if res.frozen else ''}")
    _write_manifest(out_dir, "attack", cfg_path, artifacts, timings=timings_total,
                    seeds={"attack": acfg.seed})
    return 0


def cmd_adv_train(cfg_path: str) -> int:
    schema = {
        "data": {"dir": ("str", True, None)},
        "model": {"checkpoint": ("str", True, None)},
        "grid": _GRID, "solver": _SOLVER, "attack": _ATTACK, "train": _TRAIN,
        "advtrain": {
            "variant": ("str", True, None),
            "rounds": ("int", False, 1),
            "replace_fraction": ("float", False, 0.5),
            "policy": ("str", False, "replace"),
            "constant_lo": ("float", False, 0.0),
            "constant_hi": ("float", False, 0.0),
            "seed": ("int", False, 0),
        },
        "output": {"checkpoint": ("str", True, None), "out_dir": ("str", True, None)},
    }
    sec = validate_config(read_config(cfg_path), schema, open_sections=("pools",))
    ds = load_dataset(sec["data"]["dir"])
    params = load_checkpoint(sec["model"]["checkpoint"])
    grid = _grid_from(sec["grid"])
    solver = _solver_from(sec["solver"], grid)
    av = sec["advtrain"]
    attack_cfg = None
    if sec["attack"]["epsilon"] > 0:
        attack_cfg = _attack_cfg_from(sec["attack"])
    cfg = AdvTrainConfig(
        variant=av["variant"], train=_train_cfg_from(sec["train"]),
        attack=attack_cfg, rounds=av["rounds"],
        replace_fraction=av["replace_fraction"], policy=av["policy"],
        constant_range=(av["constant_lo"], av["constant_hi"]), seed=av["seed"],
    )
    pool = None
    if sec["pools"]:
        pool = OodPool()
        for name, path in sec["pools"].items():
            pool.add(name, load_dataset(path))

    problem = burgers_problem(params, solver)
    out_dir = sec["output"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []
    if cfg.variant == "round_by_round":
        params2, history = round_by_round(params, ds.inputs, ds.outputs, problem, cfg, pool=pool)
        for row in history:
            if "ood" in row:
                path = os.path.join(out_dir, f"ood_round_{row['round']:02d}.csv")
                atomic_write_text(path, ood_table_csv(row["ood"], round_index=row["round"]))
                artifacts.append(path)
    elif cfg.variant == "batch_by_batch":
        params2, history = batch_by_batch(params, ds.inputs, ds.outputs, problem, cfg)
    else:
        params2, history = random_constant_baseline(params, ds.inputs, ds.outputs, problem, cfg)

    ckpt = sec["output"]["checkpoint"]
    save_checkpoint(ckpt, params2)
    artifacts.append(ckpt)
    _write_manifest(out_dir, "adv-train", cfg_path, artifacts,
                    seeds={"advtrain": cfg.seed, "train": cfg.train.seed})
    print(f"adv-train[{cfg.variant}]: done, checkpoint {ckpt}")
    return 0


def cmd_eval_ood(cfg_path: str) -> int:
    schema = {
        "model": {"checkpoint": ("str", True, None),
                  "reference_checkpoint": ("str", False, None)},
        "output": {"out_dir": ("str", True, None)},
    }
    sec = validate_config(read_config(cfg_path), schema, open_sections=("pools",))
    if not sec["pools"]:
        return _fail("no pools given: nothing to evaluate")
    params = load_checkpoint(sec["model"]["checkpoint"])
    reference = None
    if sec["model"]["reference_checkpoint"]:
        reference = load_checkpoint(sec["model"]["reference_checkpoint"])
    pool = OodPool()
    for name, path in sec["pools"].items():
        pool.add(name, load_dataset(path))
    rows = eval_ood(params, pool, fno_forward, reference=reference)
    out_dir = sec["output"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "ood_metrics.csv")
    atomic_write_text(path, ood_table_csv(rows))
    _write_manifest(out_dir, "eval-ood", cfg_path, [path])
    for r in rows:
        print(f"eval-ood: {r['name']} rmse {r['rmse']:.6g} mae {r['mae']:.6g}")
    return 0


def cmd_diagnose(cfg_path: str) -> int:
    schema = {
        "diagnose": {
            "results_dir": ("str", True, None),
            "forcing": ("str", False, "diagonal"),
            "forcing_amplitude": ("float", False, 0.5),
            "frames_dataset": ("str", False, None),
        },
        "output": {"out_dir": ("str", True, None)},
    }
    sec = validate_config(read_config(cfg_path), schema)
    rdir = sec["diagnose"]["results_dir"]
    perts = sorted(
        f for f in (os.listdir(rdir) if os.path.isdir(rdir) else [])
        if f.startswith("perturbation_") and f.endswith(".sgf1")
    )
    if not perts:
        return _fail(f"nothing to diagnose in {rdir!r}: no perturbation files")
    fields = [read_field(os.path.join(rdir, f)) for f in perts]
    grid = fields[0].grid
    mean_pert = avg_perturbation([f.values for f in fields])
    out_dir = sec["output"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []

    lines = ["metric,value", f"count,{len(fields)}"]
    if grid.dims == 2:
        pattern = forcing_pattern(sec["diagnose"]["forcing"], grid,
                                  sec["diagnose"]["forcing_amplitude"])
        corr = correlate(mean_pert, pattern.values)
        lines.append(f"forcing_correlation,{corr:.17g}")
        pgm = os.path.join(out_dir, "mean_perturbation.pgm")
        write_pgm(pgm, mean_pert)
        artifacts.append(pgm)
    score = periodicity_check(mean_pert)
    lines.append(f"periodicity_score,{score:.17g}")
    mp = os.path.join(out_dir, "mean_perturbation.sgf1")
    write_field(mp, Field(grid, mean_pert))
    artifacts.append(mp)

    if sec["diagnose"]["frames_dataset"]:
        ds = load_dataset(sec["diagnose"]["frames_dataset"])
        if ds.frames is not None:
            rep = spectral_report([Field(ds.grid, fr) for fr in ds.frames.mean(axis=0)])
            ens = os.path.join(out_dir, "enstrophy_series.csv")
            atomic_write_text(ens, "frame,enstrophy\n" + "\n".join(
                f"{i},{z:.17g}" for i, z in enumerate(rep["enstrophy"])) + "\n")
            artifacts.append(ens)
            for i, lm in enumerate(rep["log_abs_coeffs"]):
                path = os.path.join(out_dir, f"log_abs_coeffs_{i:03d}.pgm")
                write_pgm(path, lm)
                artifacts.append(path)

    summary = os.path.join(out_dir, "diagnostics.csv")
    atomic_write_text(summary, "\n".join(lines) + "\n")
    artifacts.append(summary)
    _write_manifest(out_dir, "diagnose", cfg_path, artifacts)
    print(f"diagnose: wrote {len(artifacts)} artifacts to {out_dir}")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "attack": cmd_attack,
    "adv-train": cmd_adv_train,
    "eval-ood": cmd_eval_ood,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="advdistill",
        description="Differentiable pseudospectral solvers, neural-operator "
        "students, and solver-in-the-loop adversarial attacks/training.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("config", help="path to the strict key=value config file")
    args = parser.parse_args(argv)
    if not os.path.exists(args.config):
        return _fail(f"config file not found: {args.config}")
    try:
        return _COMMANDS[args.command](args.config)
    except ConfigError as err:
        return _fail(f"config error: {err}")
    except FileNotFoundError as err:
        return _fail(f"missing file: {err}")
    except (ValueError, RuntimeError) as err:
        return _fail(f"{type(err).__name__}: {err}", code=3)


if __name__ == "__main__":
    sys.exit(main())
