"""
Outer minimization: round-by-round active learning, batch-by-batch
adversarial training, the random-constant baseline, and delta-loss OOD
evaluation against a frozen reference model.

Alternation bookkeeping: attack phases never touch model parameters and
training phases never mutate the attacked inputs; a teacher blow-up while
re-labelling an attacked input drops that sample with a log entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attack import AttackConfig, TeacherAdapter, make_attack_loss, run_attack
from .datasets import Dataset
from .losses import mae, make_loss, rmse
from .operators import AdamOptimizer, TrainConfig, loss_and_grads, train
from .solvers import BlowupError

__all__ = [
    "AdvTrainConfig",
    "OodPool",
    "DistillProblem",
    "round_by_round",
    "batch_by_batch",
    "random_constant_baseline",
    "eval_ood",
    "ood_table_csv",
    "audit_labels",
]


@dataclass(frozen=True)
class AdvTrainConfig:
    """Knobs shared by the adversarial-training variants.

    ``attack=None`` means a degenerate (epsilon = 0) inner step: inputs
    pass through unchanged and the variants reduce to plain training.
    ``rounds`` may be 0 (the model is returned untouched).
    """

    variant: str  # "round_by_round" | "batch_by_batch" | "random_constant"
    train: TrainConfig
    attack: AttackConfig | None = None
    rounds: int = 1
    replace_fraction: float = 0.5
    policy: str = "replace"  # "replace" | "expand"
    constant_range: tuple = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("round_by_round", "batch_by_batch", "random_constant"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 < self.replace_fraction <= 1.0:
            raise ValueError("replace_fraction must be in (0, 1]")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.policy not in ("replace", "expand"):
            raise ValueError(f"unknown policy {self.policy!r}")


@dataclass
class OodPool:
    """Named evaluation datasets with teacher labels and their manifests."""

    datasets: dict[str, Dataset] = field(default_factory=dict)

    def add(self, name: str, ds: Dataset) -> None:
        self.datasets[name] = ds

    def __iter__(self):
        return iter(self.datasets.items())


@dataclass
class DistillProblem:
    """Binds one teacher/student pair for the training loops.

    ``student_forward(params, batch)`` evaluates a batch for training;
    ``student_fn_of(params)`` yields the single-input callable attacks use.
    """

    teacher: TeacherAdapter
    student_forward: callable
    student_fn_of: callable


def _attack_input(x0, params, problem: DistillProblem, cfg: AdvTrainConfig):
    """Inner maximization for one sample; returns the perturbed input."""
    if cfg.attack is None:
        return np.asarray(x0, dtype=float)
    evaluate = make_attack_loss(
        problem.student_fn_of(params),
        problem.teacher,
        mode=cfg.attack.gradient_mode,
    )
    return run_attack(np.asarray(x0, dtype=float), evaluate, cfg.attack).x_final


def _relabel(x, problem: DistillProblem):
    return problem.teacher.fast(x)


def round_by_round(params, inputs, targets, problem: DistillProblem,
                   cfg: AdvTrainConfig, pool: OodPool | None = None):
    """Active-learning alternation: train, attack a subset, re-label, swap in.

    Per round, ``replace_fraction`` of the pool (sampled uniformly without
    replacement) is attacked against the current model with the configured
    step budget and re-labelled by the teacher; the attacked samples
    replace their originals (or are appended under the "expand" policy).
    Returns (trained params, per-round history); each history row carries
    the delta-loss table against the model passed in.
    """
    rng = np.random.default_rng(cfg.seed)
    reference = params
    pool_in = np.array(inputs, dtype=float)
    pool_out = np.array(targets, dtype=float)
    history = []

    for rnd in range(cfg.rounds):
        params, train_hist = train(params, problem.student_forward, pool_in, pool_out, cfg.train)
        row = {"round": rnd, "train_loss": train_hist[-1]["train_loss"],
               "pool_size": len(pool_in), "dropped": 0}
        if pool is not None:
            row["ood"] = eval_ood(params, pool, problem.student_forward,
                                  reference=reference)
        k = max(1, int(round(cfg.replace_fraction * len(pool_in))))
        chosen = rng.choice(len(pool_in), size=min(k, len(pool_in)), replace=False)
        new_in, new_out, kept = [], [], []
        for i in chosen:
            xa = _attack_input(pool_in[i], params, problem, cfg)
            try:
                ya = _relabel(xa, problem)
            except BlowupError:
                row["dropped"] += 1
                continue
            new_in.append(xa)
            new_out.append(ya)
            kept.append(i)
        if kept:
            if cfg.policy == "replace":
                pool_in[np.array(kept)] = np.stack(new_in)
                pool_out[np.array(kept)] = np.stack(new_out)
            else:
                pool_in = np.concatenate([pool_in, np.stack(new_in)])
                pool_out = np.concatenate([pool_out, np.stack(new_out)])
        history.append(row)

    return params, history


def _adversarial_batches(params, xb, yb, problem, cfg, pert_fn, log):
    """Perturb and re-label one minibatch; blow-ups drop the sample."""
    out_x, out_y = [], []
    for x0, y0 in zip(xb, yb):
        xa = pert_fn(x0, params)
        if xa is x0 or np.array_equal(xa, x0):
            out_x.append(np.asarray(x0, dtype=float))
            out_y.append(np.asarray(y0, dtype=float))
            continue
        try:
            ya = _relabel(xa, problem)
        except BlowupError:
            log.append("dropped sample after teacher blow-up")
            continue
        out_x.append(xa)
        out_y.append(ya)
    if not out_x:
        return None, None
    return np.stack(out_x), np.stack(out_y)


def _batchwise_training(params, inputs, targets, problem, cfg, pert_fn):
    """Shared loop: every batch is perturbed/re-labelled, then stepped on."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    tc = cfg.train
    loss_fn = make_loss(tc.loss)
    rng = np.random.default_rng(tc.seed)
    table = {name: np.array(v) for name, v in params.tensor_items()}
    opt = AdamOptimizer(table, tc.lr, tc.beta1, tc.beta2, tc.eps)
    history = []
    log: list[str] = []

    for epoch in range(tc.epochs):
        order = rng.permutation(len(inputs))
        losses = []
        for start in range(0, len(inputs), tc.batch_size):
            batch = order[start : start + tc.batch_size]
            current = params.with_tensors(table)
            xb, yb = _adversarial_batches(
                current, inputs[batch], targets[batch], problem, cfg, pert_fn, log
            )
            if xb is None:
                continue
            lval, grads = loss_and_grads(current, problem.student_forward, xb, yb, loss_fn)
            opt.step(grads)
            losses.append(lval)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "log": list(log)})
        log.clear()
    return params.with_tensors(table), history


def batch_by_batch(params, inputs, targets, problem: DistillProblem, cfg: AdvTrainConfig):
    """Adversarial training proper: the model only ever sees attacked inputs."""

    def pert(x0, current):
        if cfg.attack is None:
            return x0
        return _attack_input(x0, current, problem, cfg)

    return _batchwise_training(params, inputs, targets, problem, cfg, pert)


def random_constant_baseline(params, inputs, targets, problem: DistillProblem,
                             cfg: AdvTrainConfig):
    """Baseline: shift each input by one uniform constant, re-label, train."""
    lo, hi = cfg.constant_range
    rng = np.random.default_rng(cfg.seed)

    def pert(x0, current):
        if hi == lo:
            shift = lo
        else:
            shift = rng.uniform(lo, hi)
        if shift == 0.0:
            return x0
        return np.asarray(x0, dtype=float) + shift

    return _batchwise_training(params, inputs, targets, problem, cfg, pert)


# ---------------------------------------------------------------------------
# evaluation


def eval_ood(params, pool: OodPool, student_forward, reference=None) -> list[dict]:
    """Deterministic metric table over the pool, with deltas vs a reference.

    Rows: name, rmse, mae and (when ``reference`` is given) delta_rmse /
    delta_mae = metric(model) - metric(reference).
    """
    rows = []
    for name, ds in pool:
        pred = ad.value(student_forward(params, ds.inputs))
        row = {"name": name, "rmse": rmse(pred, ds.outputs), "mae": mae(pred, ds.outputs)}
        if reference is not None:
            rpred = ad.value(student_forward(reference, ds.inputs))
            row["delta_rmse"] = row["rmse"] - rmse(rpred, ds.outputs)
            row["delta_mae"] = row["mae"] - mae(rpred, ds.outputs)
        rows.append(row)
    return rows


def ood_table_csv(rows: list[dict], round_index: int | None = None) -> str:
    cols = ["name", "rmse", "mae", "delta_rmse", "delta_mae"]
    header = cols + (["round"] if round_index is not None else [])
    lines = [",".join(header)]
    for r in rows:
        vals = [str(r["name"])] + [
            f"{r[c]:.17g}" if c in r else "" for c in cols[1:]
        ]
        if round_index is not None:
            vals.append(str(round_index))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def audit_labels(inputs, targets, problem: DistillProblem, fraction: float = 0.01,
                 seed: int = 0) -> float:
    """Re-solve a random sample of the pool; max abs label error found."""
    rng = np.random.default_rng(seed)
    n = len(inputs)
    k = max(1, int(round(fraction * n)))
    idx = rng.choice(n, size=min(k, n), replace=False)
    worst = 0.0
    for i in idx:
        fresh = problem.teacher.fast(np.asarray(inputs[i], dtype=float))
        worst = max(worst, float(np.max(np.abs(fresh - targets[i]))))
    return worst
