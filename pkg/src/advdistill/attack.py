"""
Inner maximization: projected gradient ascent on the student/teacher
discrepancy in L-inf or L2 balls, with sign or Adam-adapted directions.

Teacher gradient modes
----------------------
``with_solver``   teacher re-solved under the tape each step; gradients flow
                  through both the student and the solver.
``detached``      teacher re-solved on the fast path and fed as a constant
                  (value-identical to stop_gradient around a taped solve).
``approximated``  nearest dictionary entry's stored output stands in for the
                  teacher; no solver call. The loss that drives the ascent
                  is then a surrogate; the true loss is logged next to it.
``constant``      (per-frame, 2D pipeline) the frame is frozen at its value
                  from the unperturbed input.

Blow-ups during a step trigger the substep ladder: the step is retried at
successively smaller fractions of alpha, and if every rung fails the last
non-blow-up iterate is kept and the attack stops.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tape, Var
from .losses import LossSpec, make_loss
from .operators import FnoParams, fno2d_rollout
from .solvers import BlowupError, SolverConfig, build_consts, solve_traced
from .spectral import Field

__all__ = [
    "AttackConfig",
    "AttackResult",
    "Dictionary",
    "StepEval",
    "TeacherAdapter",
    "teacher_from_config",
    "make_attack_loss",
    "make_ns_attack_loss",
    "teacher_loss",
    "pgd_linf",
    "pgd_l2",
    "pgd_adam",
    "run_attack",
    "batch_attack",
    "attack_result_csv",
]

DEFAULT_LADDER = (1.0, 0.5, 0.25, 0.1, 0.03, 0.01, 0.003, 0.001)

GRADIENT_MODES = ("with_solver", "detached", "approximated", "constant")


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    alpha: float
    steps: int
    norm: str = "l2"  # "inf" | "l2"
    adam: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    delta_stab: float = 1e-12
    random_start: bool = False
    seed: int = 0
    clip_min: float | None = None
    clip_max: float | None = None
    gradient_mode: str = "with_solver"
    ladder: tuple = DEFAULT_LADDER

    def __post_init__(self):
        if not (self.epsilon > 0 and self.alpha > 0 and self.steps >= 1):
            raise ValueError("need epsilon > 0, alpha > 0, steps >= 1")
        if self.norm not in ("inf", "l2"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")
        lad = tuple(self.ladder)
        if any(b >= a for a, b in zip(lad, lad[1:])):
            raise ValueError("substep ladder must be strictly decreasing")
        if lad[-1] < 1e-3:
            raise ValueError("substep ladder must end at >= 1e-3 of alpha")


@dataclass
class Dictionary:
    """Precomputed (input, teacher output) pairs for the surrogate mode."""

    inputs: np.ndarray
    outputs: np.ndarray
    frames: np.ndarray | None = None

    def __post_init__(self):
        if len(self.inputs) != len(self.outputs):
            raise ValueError("dictionary inputs/outputs length mismatch")
        if len(self.inputs) == 0:
            raise ValueError("empty dictionary")
        self._flat = self.inputs.reshape(len(self.inputs), -1)

    def __len__(self) -> int:
        return len(self.inputs)

    def nearest(self, x: np.ndarray) -> int:
        """Index of the entry closest to ``x`` in raw-cell L2 distance."""
        d = self._flat - np.asarray(x).reshape(1, -1)
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))


@dataclass
class StepEval:
    true_loss: float
    surrogate_loss: float | None
    grad: np.ndarray
    timings: dict = field(default_factory=dict)


@dataclass
class AttackResult:
    """Loss curves and final state of one attack.

    ``true_losses[t]`` is the loss at iterate t (t=0 is the start point);
    ``alphas_used[t]`` the accepted step-size multiple for step t (nan when
    the step was frozen). ``substep_log`` records every ladder retry.
    """

    x0: np.ndarray
    x_final: np.ndarray
    true_losses: np.ndarray
    surrogate_losses: np.ndarray | None
    alphas_used: np.ndarray
    blowup_flags: np.ndarray
    substep_log: list
    frozen: bool
    timings: dict

    @property
    def perturbation(self) -> np.ndarray:
        return self.x_final - self.x0

    @property
    def final_true_loss(self) -> float:
        return float(self.true_losses[-1])


# ---------------------------------------------------------------------------
# teacher/student loss assembly


@dataclass
class TeacherAdapter:
    """Differentiable and fast forward views of the same teacher map."""

    traced: callable
    fast: callable


def teacher_from_config(cfg: SolverConfig) -> TeacherAdapter:
    consts = build_consts(cfg.grid)

    def traced(x):
        _, final = solve_traced(x, cfg, consts)
        return final

    def fast(x: np.ndarray) -> np.ndarray:
        _, final = solve_traced(np.asarray(x), cfg, consts)
        return final

    return TeacherAdapter(traced=traced, fast=fast)


def make_attack_loss(
    student_fn,
    teacher: TeacherAdapter,
    mode: str = "with_solver",
    dictionary: Dictionary | None = None,
    loss_spec: LossSpec | None = None,
):
    """Loss evaluator for the initial->final (1D) pipeline.

    Returns ``evaluate(x) -> StepEval`` computing the mode's ascent
    gradient, the true loss, and (approximated mode) the surrogate loss.
    """
    if mode == "approximated" and dictionary is None:
        raise ValueError("approximated mode needs a dictionary")
    if mode == "constant":
        raise ValueError("constant mode is a per-frame setting of the 2D pipeline")
    loss_fn = make_loss(loss_spec or LossSpec("mse"))

    def evaluate(x: np.ndarray) -> StepEval:
        timings = {"solver_forward": 0.0, "student_forward": 0.0, "backward": 0.0}
        x = np.asarray(x, dtype=float)
        if mode == "with_solver":
            with Tape() as tape:
                xv = Var(x)
                t0 = time.perf_counter()
                target = teacher.traced(xv)
                timings["solver_forward"] = time.perf_counter() - t0
                t0 = time.perf_counter()
                pred = student_fn(xv)
                timings["student_forward"] = time.perf_counter() - t0
                loss = loss_fn(pred, target)
                t0 = time.perf_counter()
                grad = tape.gradient(loss, xv)
                timings["backward"] = time.perf_counter() - t0
            return StepEval(float(ad.value(loss)), None, grad, timings)

        if mode == "detached":
            t0 = time.perf_counter()
            target = teacher.fast(x)
            timings["solver_forward"] = time.perf_counter() - t0
        else:  # approximated
            target = dictionary.outputs[dictionary.nearest(x)]
        with Tape() as tape:
            xv = Var(x)
            t0 = time.perf_counter()
            pred = student_fn(xv)
            timings["student_forward"] = time.perf_counter() - t0
            loss = loss_fn(pred, target)
            t0 = time.perf_counter()
            grad = tape.gradient(loss, xv)
            timings["backward"] = time.perf_counter() - t0
        loss_val = float(ad.value(loss))
        if mode == "detached":
            return StepEval(loss_val, None, grad, timings)
        true_target = teacher.fast(x)  # logging only; not on the attack path
        true_loss = float(ad.value(loss_fn(ad.value(pred), true_target)))
        return StepEval(true_loss, loss_val, grad, timings)

    return evaluate


def teacher_loss(mode, student_fn, teacher, dictionary, x, loss_spec=None):
    """One-shot evaluation of the mode's loss and ascent gradient at ``x``."""
    evaluate = make_attack_loss(student_fn, teacher, mode, dictionary, loss_spec)
    e = evaluate(np.asarray(x, dtype=float))
    return e.true_loss if e.surrogate_loss is None else e.surrogate_loss, e.grad, e


def make_ns_attack_loss(
    params: FnoParams,
    cfg: SolverConfig,
    x0: np.ndarray,
    frame_modes: dict | None = None,
    dictionary: Dictionary | None = None,
    loss_spec: LossSpec | None = None,
):
    """Loss evaluator for the 2D frame pipeline.

    The teacher solve provides intermediate frames at the snapshot spacing;
    the student consumes the input frame plus the first tin-1 teacher
    frames and recurrently predicts up to the final time; the loss scores
    only the final predicted frame against the teacher's final frame.

    ``frame_modes`` maps teacher frame times (1, 2, ..., tin-1 and the
    final time) to a gradient mode; unlisted frames follow "with_solver".
    "constant" freezes a frame at its value from the unperturbed ``x0``.
    """
    if cfg.equation != "ns2d" or cfg.snapshot_spacing is None:
        raise ValueError("frame pipeline needs an ns2d config with snapshot spacing")
    tin = params.arch.tin
    spacing = cfg.snapshot_spacing
    n_frames = int(round(cfg.t_end / spacing))  # teacher frames at spacing..t_end
    if tin - 1 > n_frames - 1:
        raise ValueError("horizon too short for the student's input window")
    loss_fn = make_loss(loss_spec or LossSpec("mse"))
    consts = build_consts(cfg.grid)

    input_times = [spacing * (i + 1) for i in range(tin - 1)]
    final_time = cfg.t_end
    needed = input_times + [final_time]
    modes = {t: "with_solver" for t in needed}
    for t, m in (frame_modes or {}).items():
        t = float(t)
        if t not in modes:
            raise ValueError(f"frame time {t} is not part of the pipeline")
        if m not in GRADIENT_MODES:
            raise ValueError(f"unknown gradient mode {m!r}")
        modes[t] = m
    if any(m == "approximated" for m in modes.values()) and (
        dictionary is None or dictionary.frames is None
    ):
        raise ValueError("approximated frames need a dictionary with frame stacks")

    def fast_frames(x: np.ndarray) -> dict:
        snaps, final = solve_traced(np.asarray(x), cfg, consts)
        table = {round(t / spacing): v for t, v in snaps}
        table[n_frames] = final
        return table

    reference = fast_frames(x0) if any(m == "constant" for m in modes.values()) else None

    def evaluate(x: np.ndarray) -> StepEval:
        timings = {"solver_forward": 0.0, "student_forward": 0.0, "backward": 0.0}
        x = np.asarray(x, dtype=float)
        need_traced = any(m == "with_solver" for m in modes.values())
        need_fast = any(m == "detached" for m in modes.values())
        dict_stack = None
        if any(m == "approximated" for m in modes.values()):
            dict_stack = dictionary.frames[dictionary.nearest(x)]

        with Tape() as tape:
            xv = Var(x)
            traced_table = {}
            fast_table = {}
            t0 = time.perf_counter()
            if need_traced:
                snaps, final = solve_traced(xv, cfg, consts)
                traced_table = {round(t / spacing): v for t, v in snaps}
                traced_table[n_frames] = final
            if need_fast:
                fast_table = fast_frames(x)
            timings["solver_forward"] = time.perf_counter() - t0

            def frame(t: float):
                idx = round(t / spacing)
                m = modes[t]
                if m == "with_solver":
                    return traced_table[idx]
                if m == "detached":
                    return fast_table[idx]
                if m == "constant":
                    return reference[idx]
                return dict_stack[idx]  # stored stacks start at the initial frame

            t0 = time.perf_counter()
            window = [xv] + [frame(t) for t in input_times]
            preds = fno2d_rollout(params, window, steps=n_frames - (tin - 1))
            timings["student_forward"] = time.perf_counter() - t0

            target = frame(final_time)
            loss = loss_fn(preds[-1], target)
            t0 = time.perf_counter()
            grad = tape.gradient(loss, xv)
            timings["backward"] = time.perf_counter() - t0
            pred_final = ad.value(preds[-1])
            loss_val = float(ad.value(loss))

        final_mode = modes[final_time]
        if final_mode in ("with_solver", "detached"):
            return StepEval(loss_val, None, grad, timings)
        # surrogate or frozen target: log the honest discrepancy next to it
        if need_fast:
            true_final = fast_table[n_frames]
        else:
            true_final = fast_frames(x)[n_frames]
        true_loss = float(ad.value(loss_fn(pred_final, true_final)))
        return StepEval(true_loss, loss_val, grad, timings)

    return evaluate


# ---------------------------------------------------------------------------
# projections and PGD loops


def _project(x: np.ndarray, x0: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.norm == "inf":
        x = np.clip(x, x0 - cfg.epsilon, x0 + cfg.epsilon)
    else:
        delta = x - x0
        norm = float(np.linalg.norm(delta))
        if norm > cfg.epsilon:
            if cfg.adam:
                delta = delta * (cfg.epsilon / (norm + 1e-12))
            else:
                delta = delta * (cfg.epsilon / norm)
            x = x0 + delta
    if cfg.clip_min is not None or cfg.clip_max is not None:
        x = np.clip(x, cfg.clip_min, cfg.clip_max)
    return x


def _random_start(x0: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    if cfg.norm == "inf":
        xi = rng.uniform(-cfg.epsilon, cfg.epsilon, size=x0.shape)
    else:
        d = rng.standard_normal(x0.shape)
        d /= np.linalg.norm(d)
        r = cfg.epsilon * rng.uniform() ** (1.0 / x0.size)
        xi = r * d
    return _project(x0 + xi, x0, cfg)


def run_attack(x0: np.ndarray, evaluate, cfg: AttackConfig) -> AttackResult:
    """Shared PGD loop with the substep ladder; direction per cfg."""
    x0 = np.asarray(x0, dtype=float)
    x = _random_start(x0, cfg) if cfg.random_start else x0.copy()

    true_losses = [np.nan] * (cfg.steps + 1)
    surrogate = [np.nan] * (cfg.steps + 1)
    alphas = np.full(cfg.steps, np.nan)
    blowups = np.zeros(cfg.steps, dtype=bool)
    substep_log: list[dict] = []
    totals = {"solver_forward": 0.0, "student_forward": 0.0, "backward": 0.0,
              "update": 0.0}
    any_surrogate = False
    frozen = False

    def tally(e: StepEval):
        for k, v in e.timings.items():
            totals[k] += v

    try:
        e = evaluate(x)
    except (BlowupError, NonFiniteError) as err:
        raise ValueError(f"attack start point already blows up: {err}") from err
    tally(e)
    true_losses[0] = e.true_loss
    if e.surrogate_loss is not None:
        surrogate[0] = e.surrogate_loss
        any_surrogate = True

    m = np.zeros_like(x)
    v = np.zeros_like(x)
    t_adam = 0

    for step in range(cfg.steps):
        g = e.grad
        t0 = time.perf_counter()
        if cfg.adam:
            t_adam += 1
            m = cfg.beta1 * m + (1 - cfg.beta1) * g
            v = cfg.beta2 * v + (1 - cfg.beta2) * (g * g)
            mhat = m / (1 - cfg.beta1**t_adam)
            vhat = v / (1 - cfg.beta2**t_adam)
            d = mhat / (np.sqrt(vhat) + cfg.adam_eps)
            dnorm = float(np.linalg.norm(d))
            direction = d if dnorm < 1e-12 else d / (dnorm + cfg.delta_stab)
        elif cfg.norm == "inf":
            direction = np.sign(g)
        else:
            direction = g / (float(np.linalg.norm(g)) + cfg.delta_stab)
        totals["update"] += time.perf_counter() - t0

        accepted = False
        for mult in cfg.ladder:
            t0 = time.perf_counter()
            cand = _project(x + cfg.alpha * mult * direction, x0, cfg)
            totals["update"] += time.perf_counter() - t0
            try:
                e_new = evaluate(cand)
            except (BlowupError, NonFiniteError) as err:
                blowups[step] = True
                substep_log.append(
                    {"step": step, "alpha_mult": mult, "accepted": False,
                     "reason": type(err).__name__}
                )
                continue
            if not np.isfinite(e_new.true_loss) or not np.isfinite(e_new.grad).all():
                blowups[step] = True
                substep_log.append(
                    {"step": step, "alpha_mult": mult, "accepted": False,
                     "reason": "non-finite eval"}
                )
                continue
            accepted = True
            if mult != 1.0:
                substep_log.append(
                    {"step": step, "alpha_mult": mult, "accepted": True,
                     "reason": "substep"}
                )
            break

        if not accepted:
            # every rung blew up: keep the last non-blow-up input
            frozen = True
            true_losses = true_losses[: step + 1]
            surrogate = surrogate[: step + 1]
            alphas = alphas[:step]
            blowups = blowups[: step + 1]
            break

        x = cand
        e = e_new
        tally(e)
        alphas[step] = cfg.alpha * mult
        true_losses[step + 1] = e.true_loss
        if e.surrogate_loss is not None:
            surrogate[step + 1] = e.surrogate_loss
            any_surrogate = True

    return AttackResult(
        x0=x0,
        x_final=x,
        true_losses=np.asarray(true_losses, dtype=float),
        surrogate_losses=np.asarray(surrogate, dtype=float) if any_surrogate else None,
        alphas_used=np.asarray(alphas, dtype=float),
        blowup_flags=np.asarray(blowups, dtype=bool),
        substep_log=substep_log,
        frozen=frozen,
        timings=totals,
    )


def pgd_linf(x0, evaluate, cfg: AttackConfig) -> AttackResult:
    """Sign-direction ascent clamped elementwise to the inf-ball."""
    if cfg.norm != "inf" or cfg.adam:
        cfg = replace(cfg, norm="inf", adam=False)
    return run_attack(x0, evaluate, cfg)


def pgd_l2(x0, evaluate, cfg: AttackConfig) -> AttackResult:
    """Normalized-gradient ascent with radial projection onto the L2 ball."""
    if cfg.norm != "l2" or cfg.adam:
        cfg = replace(cfg, norm="l2", adam=False)
    return run_attack(x0, evaluate, cfg)


def pgd_adam(x0, evaluate, cfg: AttackConfig) -> AttackResult:
    """Adam-adapted direction, L2-normalized unless degenerate, L2 projection."""
    if cfg.norm != "l2" or not cfg.adam:
        cfg = replace(cfg, norm="l2", adam=True)
    return run_attack(x0, evaluate, cfg)


def batch_attack(inputs, loss_factory, cfg: AttackConfig) -> list[AttackResult]:
    """Per-sample attacks in input order; identical to sequential runs."""
    results = []
    for x0 in inputs:
        evaluate = loss_factory(np.asarray(x0, dtype=float))
        results.append(run_attack(np.asarray(x0, dtype=float), evaluate, cfg))
    return results


def attack_result_csv(result: AttackResult) -> str:
    """Loss-curve CSV: step, true_loss, surrogate_loss, alpha_used, blowup_flag."""
    lines = ["step,true_loss,surrogate_loss,alpha_used,blowup_flag"]
    for t, loss in enumerate(result.true_losses):
        sur = "" if result.surrogate_losses is None else f"{result.surrogate_losses[t]:.17g}"
        if np.isnan(loss):
            continue
        alpha = "" if t == 0 or not np.isfinite(result.alphas_used[t - 1]) else f"{result.alphas_used[t - 1]:.17g}"
        blow = 0 if t == 0 else int(result.blowup_flags[t - 1])
        lines.append(f"{t},{loss:.17g},{sur},{alpha},{blow}")
    return "\n".join(lines) + "\n"
