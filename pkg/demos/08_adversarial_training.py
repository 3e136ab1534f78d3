"""Closing the loop: active/adversarial training against the solver.

Runs a few round-by-round iterations on a small 1D student, tracking the
delta-RMSE over an out-of-distribution pool against the plain model, plus
the batch-by-batch and random-constant baselines.
"""

import numpy as np

from advdistill import AttackConfig
from advdistill.advtrain import AdvTrainConfig, batch_by_batch, eval_ood, random_constant_baseline, round_by_round
from advdistill.bench import (
    build_burgers_ood_pool,
    burgers_generator,
    burgers_ood_config,
    burgers_problem,
    train_burgers_student,
)
from advdistill.datasets import build_dataset
from advdistill.operators import Fno1dArch, TrainConfig, fno_forward

cfg = burgers_ood_config(n=64, dt=2e-3)
gen = burgers_generator()
params, ds = train_burgers_student(
    cfg, gen, count=160, epochs=50, seed=0,
    arch=Fno1dArch(n=64, modes=12, width=24, layers=3),
    train_cfg=TrainConfig(epochs=50, batch_size=20, lr=2e-3, seed=1),
)
problem = burgers_problem(params, cfg)
pool = build_burgers_ood_pool(cfg, count=10, seed=500)

attack = AttackConfig(epsilon=3.0, alpha=0.3, steps=10, norm="l2")
adv_cfg = AdvTrainConfig(
    variant="round_by_round", rounds=3, replace_fraction=0.5,
    train=TrainConfig(epochs=15, batch_size=20, lr=1e-3, seed=2),
    attack=attack, seed=3,
)
trained, history = round_by_round(params, ds.inputs, ds.outputs, problem, adv_cfg, pool=pool)
print("round-by-round delta-RMSE vs the plain model (negative = improved):")
final = eval_ood(trained, pool, fno_forward, reference=params)
for row in sorted(final, key=lambda r: r["delta_rmse"]):
    print(f"  {row['name']:>16s}: {row['delta_rmse']:+.4f}")
neg = sum(r["delta_rmse"] < 0 for r in final)
print(f"improved on {neg}/{len(final)} pool datasets")

bb_cfg = AdvTrainConfig(variant="batch_by_batch", train=TrainConfig(epochs=2, batch_size=20, lr=1e-3, seed=4),
                        attack=attack)
bb, _ = batch_by_batch(params, ds.inputs, ds.outputs, problem, bb_cfg)
rc_cfg = AdvTrainConfig(variant="random_constant", train=TrainConfig(epochs=2, batch_size=20, lr=1e-3, seed=5),
                        constant_range=(-0.5, 0.5), seed=6)
rc, _ = random_constant_baseline(params, ds.inputs, ds.outputs, problem, rc_cfg)

test = build_dataset(gen, cfg, count=24, seed=901)
base = np.sqrt(np.mean((fno_forward(params, test.inputs) - test.outputs) ** 2))
for name, model in (("batch-by-batch", bb), ("random-constant", rc)):
    r = np.sqrt(np.mean((fno_forward(model, test.inputs) - test.outputs) ** 2))
    print(f"{name}: original-test RMSE {base:.4f} -> {r:.4f} "
          f"({'worse' if r > base else 'better'} on the original distribution)")
