"""Distilling the solver into compact students.

Trains a small 1D Fourier-layer operator and a branch/trunk operator on
solver-labelled pairs, reports in-distribution accuracy, and saves/loads
a checkpoint.
"""

import os
import tempfile

import numpy as np

from advdistill import (
    DeepOnetArch,
    Fno1dArch,
    TrainConfig,
    deeponet_forward,
    fno_forward,
    init_params,
    load_checkpoint,
    relative_l2,
    save_checkpoint,
    train,
)
from advdistill.bench import burgers_generator, burgers_ood_config
from advdistill.datasets import build_dataset

cfg = burgers_ood_config(n=64, dt=2e-3)
gen = burgers_generator()
ds = build_dataset(gen, cfg, count=200, seed=0)
test = build_dataset(gen, cfg, count=32, seed=99)

arch = Fno1dArch(n=64, modes=12, width=24, layers=3)
params = init_params(arch, seed=1)
params, history = train(params, fno_forward, ds.inputs, ds.outputs,
                        TrainConfig(epochs=60, batch_size=20, lr=2e-3, seed=2),
                        validation=(test.inputs, test.outputs))
pred = fno_forward(params, test.inputs)
rel = np.mean([relative_l2(pred[i], test.outputs[i]) for i in range(len(test))])
print(f"fno: train loss {history[0]['train_loss']:.4f} -> {history[-1]['train_loss']:.2e}, "
      f"test rel L2 {rel:.4f}")

don = init_params(DeepOnetArch(n_sensors=64, latent=32, width=48, depth=3), seed=3)
don, hist = train(don, lambda p, x: deeponet_forward(p, x), ds.inputs, ds.outputs,
                  TrainConfig(epochs=60, batch_size=20, lr=2e-3, seed=4))
dpred = deeponet_forward(don, test.inputs)
drel = np.mean([relative_l2(np.asarray(dpred)[i], test.outputs[i]) for i in range(len(test))])
print(f"deeponet: train loss {hist[-1]['train_loss']:.2e}, test rel L2 {drel:.4f}")

with tempfile.TemporaryDirectory() as td:
    path = os.path.join(td, "student.sgno")
    save_checkpoint(path, params)
    reloaded = load_checkpoint(path)
    same = all(np.array_equal(a, b) for (_, a), (_, b)
               in zip(params.tensor_items(), reloaded.tensor_items()))
    print(f"checkpoint round trip intact: {same} ({os.path.getsize(path)/1e6:.1f} MB)")

# resolution transfer: the retained-mode block is grid-size independent
from advdistill.spectral import Field, spectral_upsample

fine_inputs = np.stack([
    spectral_upsample(Field(ds.grid, v), 128).values for v in test.inputs[:4]
])
fine_pred = fno_forward(params, fine_inputs)
drift = np.linalg.norm(fine_pred[:, ::2] - pred[:4]) / np.linalg.norm(pred[:4])
print(f"evaluating the n=64 student at n=128 changes outputs by {drift:.2e} (relative)")
