"""
Compact neural-operator students on the autodiff primitives: a 1D Fourier
layer network, a recurrent 2D variant consuming a sliding window of frames,
and a branch/trunk network over sensor values and query coordinates.

Forward passes accept parameter tensors and inputs as plain ndarrays or
Vars, so the same code serves evaluation, input-gradient attacks and
parameter training. Spectral layers act on the retained low modes; the
real projection of the inverse transform supplies the conjugate half, so
the whole map is translation-equivariant when coordinate channels are off.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .io import atomic_write_bytes
from .losses import LossSpec, make_loss

__all__ = [
    "Normalizer",
    "Fno1dArch",
    "Fno2dArch",
    "DeepOnetArch",
    "FnoParams",
    "DeepOnetParams",
    "TrainConfig",
    "TrainingDiverged",
    "init_params",
    "fno_forward",
    "fno2d_step",
    "fno2d_rollout",
    "deeponet_forward",
    "make_student",
    "train",
    "AdamOptimizer",
    "loss_and_grads",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class Normalizer:
    """Optional affine input/output scaling recorded in the checkpoint."""

    in_shift: float = 0.0
    in_scale: float = 1.0
    out_shift: float = 0.0
    out_scale: float = 1.0

    @staticmethod
    def fit(inputs: np.ndarray, targets: np.ndarray) -> "Normalizer":
        return Normalizer(
            in_shift=float(inputs.mean()),
            in_scale=float(inputs.std() + 1e-12),
            out_shift=float(targets.mean()),
            out_scale=float(targets.std() + 1e-12),
        )


@dataclass(frozen=True)
class Fno1dArch:
    n: int
    modes: int = 16
    width: int = 64
    layers: int = 4
    coord_channels: bool = False
    length: float = 1.0

    def __post_init__(self):
        if self.modes > self.n // 2:
            raise ValueError("retained modes must be <= n/2")


@dataclass(frozen=True)
class Fno2dArch:
    n: int
    tin: int = 10
    modes: int = 12
    width: int = 32
    layers: int = 4
    coord_channels: bool = True
    length: float = 1.0

    def __post_init__(self):
        if self.modes > self.n // 2:
            raise ValueError("retained modes must be <= n/2")


@dataclass(frozen=True)
class DeepOnetArch:
    n_sensors: int
    latent: int = 64
    width: int = 64
    depth: int = 3
    length: float = 1.0


@dataclass
class FnoParams:
    """Lift, per-layer spectral/pointwise maps, projection (1D or 2D core)."""

    arch: Fno1dArch | Fno2dArch
    p_in_w: np.ndarray
    p_in_b: np.ndarray
    spectral: list
    point_w: list
    point_b: list
    p_out_w: np.ndarray
    p_out_b: np.ndarray
    normalizer: Normalizer | None = None

    def tensor_items(self):
        yield "p_in_w", self.p_in_w
        yield "p_in_b", self.p_in_b
        for i in range(len(self.spectral)):
            yield f"spectral.{i}", self.spectral[i]
            yield f"point_w.{i}", self.point_w[i]
            yield f"point_b.{i}", self.point_b[i]
        yield "p_out_w", self.p_out_w
        yield "p_out_b", self.p_out_b

    def with_tensors(self, table: dict) -> "FnoParams":
        L = len(self.spectral)
        return FnoParams(
            arch=self.arch,
            p_in_w=table["p_in_w"],
            p_in_b=table["p_in_b"],
            spectral=[table[f"spectral.{i}"] for i in range(L)],
            point_w=[table[f"point_w.{i}"] for i in range(L)],
            point_b=[table[f"point_b.{i}"] for i in range(L)],
            p_out_w=table["p_out_w"],
            p_out_b=table["p_out_b"],
            normalizer=self.normalizer,
        )


@dataclass
class DeepOnetParams:
    """Branch net over sensor values, trunk net over query coordinates."""

    arch: DeepOnetArch
    branch: list  # [(w, b), ...]
    trunk: list
    bias: np.ndarray

    def tensor_items(self):
        for i, (w, b) in enumerate(self.branch):
            yield f"branch_w.{i}", w
            yield f"branch_b.{i}", b
        for i, (w, b) in enumerate(self.trunk):
            yield f"trunk_w.{i}", w
            yield f"trunk_b.{i}", b
        yield "bias", self.bias

    def with_tensors(self, table: dict) -> "DeepOnetParams":
        nb, nt = len(self.branch), len(self.trunk)
        return DeepOnetParams(
            arch=self.arch,
            branch=[(table[f"branch_w.{i}"], table[f"branch_b.{i}"]) for i in range(nb)],
            trunk=[(table[f"trunk_w.{i}"], table[f"trunk_b.{i}"]) for i in range(nt)],
            bias=table["bias"],
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 20
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}")


# ---------------------------------------------------------------------------
# initialization


def _affine_init(rng, fan_in, fan_out):
    w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
    b = np.zeros(fan_out)
    return w, b


def init_params(arch, seed: int = 0, normalizer: Normalizer | None = None):
    """Deterministic parameter initialization for any architecture."""
    rng = np.random.default_rng(seed)
    if isinstance(arch, Fno1dArch) or isinstance(arch, Fno2dArch):
        two_d = isinstance(arch, Fno2dArch)
        cin = (arch.tin if two_d else 1) + (2 if two_d and arch.coord_channels else 0)
        if not two_d and arch.coord_channels:
            cin += 1
        w = arch.width
        p_in_w, p_in_b = _affine_init(rng, cin, w)
        spectral, point_w, point_b = [], [], []
        if two_d:
            n_kx = 2 * arch.modes - 1
            block_shape = (n_kx, arch.modes, w, w)
            scale = 1.0 / (w * arch.modes)
        else:
            block_shape = (arch.modes, w, w)
            scale = 1.0 / (w * arch.modes)
        for _ in range(arch.layers):
            r = scale * (
                rng.normal(size=block_shape) + 1j * rng.normal(size=block_shape)
            )
            spectral.append(r)
            pw, pb = _affine_init(rng, w, w)
            point_w.append(pw)
            point_b.append(pb)
        p_out_w, p_out_b = _affine_init(rng, w, 1)
        return FnoParams(
            arch=arch,
            p_in_w=p_in_w,
            p_in_b=p_in_b,
            spectral=spectral,
            point_w=point_w,
            point_b=point_b,
            p_out_w=p_out_w,
            p_out_b=p_out_b,
            normalizer=normalizer,
        )
    if isinstance(arch, DeepOnetArch):
        branch, trunk = [], []
        dims = [arch.n_sensors] + [arch.width] * (arch.depth - 1) + [arch.latent]
        for i in range(len(dims) - 1):
            branch.append(_affine_init(rng, dims[i], dims[i + 1]))
        dims = [1] + [arch.width] * (arch.depth - 1) + [arch.latent]
        for i in range(len(dims) - 1):
            trunk.append(_affine_init(rng, dims[i], dims[i + 1]))
        return DeepOnetParams(arch=arch, branch=branch, trunk=trunk, bias=np.zeros(1))
    raise TypeError(f"unknown architecture {type(arch).__name__}")


# ---------------------------------------------------------------------------
# forward passes


def _mode_indices_1d(arch: Fno1dArch):
    return np.arange(arch.modes)


def _mode_indices_2d(arch: Fno2dArch):
    m, n = arch.modes, arch.n
    kx = np.concatenate([np.arange(m), np.arange(n - m + 1, n)])
    ky = np.arange(m)
    return kx, ky


def _coords_const(n: int, length: float, lead_shape, two_d: bool):
    x = np.arange(n) * (length / n) / length
    if not two_d:
        c = x[:, None]
        return [np.broadcast_to(c, lead_shape + (n, 1))]
    cx, cy = np.meshgrid(x, x, indexing="ij")
    return [
        np.broadcast_to(cx[..., None], lead_shape + (n, n, 1)),
        np.broadcast_to(cy[..., None], lead_shape + (n, n, 1)),
    ]


def _fno_core(params: FnoParams, v, mode_args):
    v = ad.affine(v, params.p_in_w, params.p_in_b)
    conv = ad.spectral_conv1d if len(mode_args) == 1 else ad.spectral_conv2d
    for r, pw, pb in zip(params.spectral, params.point_w, params.point_b):
        spec = conv(v, r, *mode_args)
        v = ad.gelu(ad.add(spec, ad.affine(v, pw, pb)))
    return ad.affine(v, params.p_out_w, params.p_out_b)


def fno_forward(params: FnoParams, a):
    """1D operator: initial state (..., n) -> final state (..., n).

    Inputs on a finer grid than the training resolution are accepted as-is
    (the retained-mode block is resolution-independent).
    """
    arch = params.arch
    if not isinstance(arch, Fno1dArch):
        raise TypeError("fno_forward drives the 1D architecture")
    av = ad.value(a)
    n = av.shape[-1]
    if n < 2 * arch.modes:
        raise ValueError(f"input resolution {n} too coarse for {arch.modes} modes")
    norm = params.normalizer
    if norm is not None:
        a = ad.scale(ad.add(a, -norm.in_shift), 1.0 / norm.in_scale)
    feats = [ad.reshape(a, av.shape + (1,))]
    if arch.coord_channels:
        feats += _coords_const(n, arch.length, av.shape[:-1], two_d=False)
    v = ad.concat(feats, axis=-1) if len(feats) > 1 else feats[0]
    out = _fno_core(params, v, mode_args=(_mode_indices_1d(arch),))
    out = ad.reshape(out, av.shape)
    if norm is not None:
        out = ad.add(ad.scale(out, norm.out_scale), norm.out_shift)
    return out


def fno2d_step(params: FnoParams, window):
    """One recurrent step: frame window (..., n, n, tin) -> next frame (..., n, n)."""
    arch = params.arch
    if not isinstance(arch, Fno2dArch):
        raise TypeError("fno2d_step drives the 2D architecture")
    wv = ad.value(window)
    if wv.shape[-1] != arch.tin:
        raise ValueError(f"window has {wv.shape[-1]} frames, expected {arch.tin}")
    n = wv.shape[-2]
    norm = params.normalizer
    if norm is not None:
        window = ad.scale(ad.add(window, -norm.in_shift), 1.0 / norm.in_scale)
    feats = [window]
    if arch.coord_channels:
        feats += _coords_const(n, arch.length, wv.shape[:-3], two_d=True)
    v = ad.concat(feats, axis=-1) if len(feats) > 1 else feats[0]
    kx, ky = _mode_indices_2d(arch)
    out = _fno_core(params, v, mode_args=(kx, ky))
    out = ad.reshape(out, wv.shape[:-1])
    if norm is not None:
        out = ad.add(ad.scale(out, norm.out_scale), norm.out_shift)
    return out


def fno2d_rollout(params: FnoParams, frames, steps: int):
    """Slide the window ``steps`` times; returns the predicted frames.

    ``frames`` is a list of tin fields (..., n, n), oldest first.
    """
    arch = params.arch
    if len(frames) != arch.tin:
        raise ValueError(f"need {arch.tin} input frames, got {len(frames)}")
    parts = [ad.reshape(f, ad.value(f).shape + (1,)) for f in frames]
    window = ad.concat(parts, axis=-1)
    preds = []
    for _ in range(steps):
        nxt = fno2d_step(params, window)
        preds.append(nxt)
        nxt_ch = ad.reshape(nxt, ad.value(nxt).shape + (1,))
        window = ad.concat([ad.slice_axis(window, slice(1, None), -1), nxt_ch], axis=-1)
    return preds


def deeponet_forward(params: DeepOnetParams, sensors, query_coords=None):
    """Branch/trunk combination: output(y) = sum_q branch_q(a) trunk_q(y) + bias."""
    arch = params.arch
    if query_coords is None:
        query_coords = np.arange(arch.n_sensors) * (arch.length / arch.n_sensors)
    q = np.asarray(query_coords, dtype=float).reshape(-1, 1)
    h = sensors
    for i, (w, b) in enumerate(params.branch):
        h = ad.affine(h, w, b)
        if i < len(params.branch) - 1:
            h = ad.tanh(h)
    t = q
    for w, b in params.trunk:
        t = ad.affine(t, w, b)
        t = ad.tanh(t)
    combined = ad.matmul_nt(h, t)  # (..., nq)
    return ad.add(combined, params.bias)


def make_student(params):
    """Uniform callable view: initial state -> predicted final state."""
    if isinstance(params, FnoParams) and isinstance(params.arch, Fno1dArch):
        return lambda a: fno_forward(params, a)
    if isinstance(params, DeepOnetParams):
        return lambda a: deeponet_forward(params, a)
    raise TypeError("make_student covers the 1D initial->final students")


# ---------------------------------------------------------------------------
# training


class AdamOptimizer:
    """Adam over a name->tensor table; complex tensors use |g|^2 moments."""

    def __init__(self, table: dict, lr: float, beta1: float, beta2: float, eps: float):
        self.table = table
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in table.items()}
        self.v = {k: np.zeros_like(v) for k, v in table.items()}
        self.t = 0

    def step(self, grads: dict) -> None:
        self.t += 1
        if self.lr == 0.0:
            return
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * np.abs(g) ** 2
            mhat = self.m[k] / (1 - self.beta1**self.t)
            vhat = self.v[k] / (1 - self.beta2**self.t)
            self.table[k] = self.table[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def loss_and_grads(params, forward_fn, xb, yb, loss_fn):
    """One taped forward/backward over the parameter table."""
    table = dict(params.tensor_items())
    names = list(table)
    with ad.Tape() as tape:
        pvars = {k: ad.Var(table[k]) for k in names}
        pred = forward_fn(params.with_tensors(pvars), xb)
        loss = loss_fn(pred, yb)
        lval = float(ad.value(loss))
        grads = tape.gradients(loss, [pvars[k] for k in names])
    return lval, dict(zip(names, grads))


def train(params, forward_fn, inputs, targets, cfg: TrainConfig, validation=None):
    """Adam on minibatch loss; returns (new params, history).

    ``forward_fn(params_like, batch_inputs)`` must accept parameter tensors
    that are Vars. History rows carry per-epoch train loss and, when a
    (inputs, targets) validation pair is given, validation loss.
    Deterministic for a fixed seed.
    """
    inputs = np.asarray(inputs)
    targets = np.asarray(targets)
    if len(inputs) != len(targets):
        raise ValueError("inputs/targets length mismatch")
    if len(inputs) == 0:
        raise ValueError("empty training set")
    loss_fn = make_loss(cfg.loss)
    rng = np.random.default_rng(cfg.seed)

    table = {name: np.array(v) for name, v in params.tensor_items()}
    opt = AdamOptimizer(table, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    history = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(inputs))
        epoch_losses = []
        for start in range(0, len(inputs), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            current = params.with_tensors(table)
            try:
                lval, grads = loss_and_grads(
                    current, forward_fn, inputs[batch], targets[batch], loss_fn
                )
            except ad.NonFiniteError as err:
                raise TrainingDiverged(epoch) from err
            if not np.isfinite(lval):
                raise TrainingDiverged(epoch)
            opt.step(grads)
            epoch_losses.append(lval)
        row = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if validation is not None:
            vi, vt = validation
            vpred = ad.value(forward_fn(params.with_tensors(table), np.asarray(vi)))
            row["val_loss"] = float(np.mean((vpred - np.asarray(vt)) ** 2))
        history.append(row)

    return params.with_tensors(table), history


# ---------------------------------------------------------------------------
# checkpoints: magic SGNO, length-prefixed JSON descriptor, raw tensors


_SGNO_MAGIC = b"SGNO"


def _arch_descr(arch) -> dict:
    d = {"kind": type(arch).__name__}
    d.update({k: getattr(arch, k) for k in arch.__dataclass_fields__})
    return d


_ARCH_KINDS = {"Fno1dArch": Fno1dArch, "Fno2dArch": Fno2dArch, "DeepOnetArch": DeepOnetArch}


def save_checkpoint(path: str, params) -> None:
    tensors = list(params.tensor_items())
    descr = {
        "arch": _arch_descr(params.arch),
        "tensors": [
            {
                "name": name,
                "shape": list(np.shape(t)),
                "dtype": "c16" if np.iscomplexobj(t) else "f8",
            }
            for name, t in tensors
        ],
    }
    norm = getattr(params, "normalizer", None)
    descr["normalizer"] = (
        None
        if norm is None
        else [norm.in_shift, norm.in_scale, norm.out_shift, norm.out_scale]
    )
    blob = json.dumps(descr, sort_keys=True).encode("utf-8")
    out = _SGNO_MAGIC + struct.pack("<I", len(blob)) + blob
    for _, t in tensors:
        arr = np.asarray(t)
        out += arr.astype("<c16" if np.iscomplexobj(arr) else "<f8").tobytes(order="C")
    atomic_write_bytes(path, out)


def load_checkpoint(path: str):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != _SGNO_MAGIC:
        raise ValueError(f"{path} is not an SGNO checkpoint")
    (dlen,) = struct.unpack_from("<I", buf, 4)
    descr = json.loads(buf[8 : 8 + dlen].decode("utf-8"))
    akind = descr["arch"].pop("kind")
    arch = _ARCH_KINDS[akind](**descr["arch"])
    norm = descr.get("normalizer")
    normalizer = None if norm is None else Normalizer(*norm)

    offset = 8 + dlen
    table = {}
    for spec in descr["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        dt = "<c16" if spec["dtype"] == "c16" else "<f8"
        width = 16 if spec["dtype"] == "c16" else 8
        arr = np.frombuffer(buf, dtype=dt, count=count, offset=offset).reshape(shape)
        table[spec["name"]] = np.ascontiguousarray(arr)
        offset += width * count
    if offset != len(buf):
        raise ValueError(f"trailing bytes in checkpoint {path}")

    template = init_params(arch, seed=0)
    loaded = template.with_tensors(table)
    if isinstance(loaded, FnoParams):
        loaded = replace_normalizer(loaded, normalizer)
    return loaded


def replace_normalizer(params: FnoParams, normalizer: Normalizer | None) -> FnoParams:
    return replace(params, normalizer=normalizer)
