"""
Reverse-mode differentiation over the fixed primitive vocabulary used by
the solvers, neural operators, and losses.

Design: a small tape of (output, inputs, vjp) records written by explicitly
named primitives, each with a hand-written adjoint. No general expression
differentiation. Every primitive accepts plain ndarrays or :class:`Var`
wrappers; with no active tape and no Var inputs it evaluates eagerly and
returns an ndarray, so the same forward code serves the fast (untaped)
path and the recorded path bit-identically.

Complex arrays carry complex cotangents under the real pairing
<a, b> = Re(sum(a * conj(b))); scalar losses are real throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

__all__ = [
    "Tape",
    "Var",
    "NonFiniteError",
    "stop_gradient",
    "fd_check",
    "FdReport",
]

_SQRT1_2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_TAPE_STACK: list["Tape"] = []


class NonFiniteError(RuntimeError):
    """A forward value or backward cotangent went non-finite.

    Attributes
    ----------
    record_index : int
        Index of the earliest offending tape record.
    op : str
        Name of the primitive that produced it.
    """

    def __init__(self, record_index: int, op: str, phase: str):
        self.record_index = record_index
        self.op = op
        self.phase = phase
        super().__init__(f"non-finite value in {phase} at record {record_index} ({op})")


class Var:
    """A tracked array. Leaves are built with ``Var(value)``."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = np.asarray(value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape}, dtype={self.value.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)


@dataclass
class _Record:
    out: Var
    inputs: tuple
    vjp: callable
    op: str


class Tape:
    """Recording context. Records are replayable in order and immutable after exit.

    Parameters
    ----------
    check_finite : bool
        Poison the tape on the first non-finite forward value (raises
        :class:`NonFiniteError` carrying the record index). Forward values
        recorded before the poisoned record stay queryable.
    """

    def __init__(self, check_finite: bool = True):
        self.records: list[_Record] = []
        self.check_finite = check_finite
        self.poisoned_at: int | None = None

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        assert _TAPE_STACK.pop() is self

    def _write(self, out_value, inputs, vjp, op) -> Var:
        out = Var(out_value)
        self.records.append(_Record(out, inputs, vjp, op))
        if self.check_finite and not np.isfinite(out_value).all():
            self.poisoned_at = len(self.records) - 1
            raise NonFiniteError(self.poisoned_at, op, "forward")
        return out

    def gradients(self, output: Var, wrt, seed=None) -> list[np.ndarray]:
        """Reverse sweep: cotangents of ``output`` for every Var in ``wrt``.

        ``seed`` defaults to ones (the usual scalar-loss case). Raises
        :class:`NonFiniteError` with the earliest offending record index if
        a cotangent goes non-finite.
        """
        if seed is None:
            seed = np.ones_like(output.value)
        adjoint: dict[int, np.ndarray] = {id(output): np.asarray(seed)}
        for index in range(len(self.records) - 1, -1, -1):
            rec = self.records[index]
            w = adjoint.pop(id(rec.out), None)
            if w is None:
                continue
            if self.check_finite and not np.isfinite(w).all():
                raise NonFiniteError(index, rec.op, "backward")
            for var, g in rec.vjp(w):
                if var is None:
                    continue
                key = id(var)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + g
                else:
                    adjoint[key] = g
        out = []
        for v in wrt:
            g = adjoint.get(id(v))
            if g is None:
                g = np.zeros_like(v.value)
            out.append(np.asarray(g))
        return out

    def gradient(self, output: Var, wrt: Var, seed=None) -> np.ndarray:
        return self.gradients(output, [wrt], seed=seed)[0]


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def value(x) -> np.ndarray:
    """Underlying ndarray of a Var or array-like."""
    return _val(x)


def _apply(op, out_value, inputs, vjp):
    """Record if a tape is active and any input is tracked; else eager."""
    tape = _active_tape()
    if tape is not None and any(isinstance(x, Var) for x in inputs):
        tracked = tuple(x if isinstance(x, Var) else None for x in inputs)
        return tape._write(out_value, tracked, lambda w: vjp(w, tracked), op)
    return out_value


def _real_like(g, x):
    """Project a cotangent back to the leaf's dtype (real leaves get Re)."""
    if np.iscomplexobj(g) and not np.iscomplexobj(x):
        return g.real
    return g


def _unbroadcast(g, shape):
    """Sum a cotangent down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# pointwise arithmetic


def add(a, b):
    av, bv = _val(a), _val(b)
    out = av + bv

    def vjp(w, tracked):
        return [
            (tracked[0], _real_like(_unbroadcast(w, av.shape), av)),
            (tracked[1], _real_like(_unbroadcast(w, bv.shape), bv)),
        ]

    return _apply("add", out, (a, b), vjp)


def sub(a, b):
    av, bv = _val(a), _val(b)
    out = av - bv

    def vjp(w, tracked):
        return [
            (tracked[0], _real_like(_unbroadcast(w, av.shape), av)),
            (tracked[1], _real_like(_unbroadcast(-w, bv.shape), bv)),
        ]

    return _apply("sub", out, (a, b), vjp)


def mul(a, b):
    """Pointwise product; adjoint distributes the cotangent by the opposite factor."""
    av, bv = _val(a), _val(b)
    out = av * bv

    def vjp(w, tracked):
        ga = w * np.conj(bv)
        gb = w * np.conj(av)
        return [
            (tracked[0], _real_like(_unbroadcast(ga, av.shape), av)),
            (tracked[1], _real_like(_unbroadcast(gb, bv.shape), bv)),
        ]

    return _apply("mul", out, (a, b), vjp)


def scale(a, s: float):
    """Multiply by a python scalar constant."""
    av = _val(a)
    out = av * s

    def vjp(w, tracked):
        return [(tracked[0], w * np.conj(s))]

    return _apply("scale", out, (a,), vjp)


def cmul(a, c):
    """Mode-wise multiply by a constant (complex) coefficient array."""
    av = _val(a)
    c = np.asarray(c)
    out = av * c

    def vjp(w, tracked):
        return [(tracked[0], _real_like(w * np.conj(c), av))]

    return _apply("cmul", out, (a,), vjp)


def square(a):
    av = _val(a)
    out = av * av

    def vjp(w, tracked):
        return [(tracked[0], _real_like(2.0 * w * np.conj(av), av))]

    return _apply("square", out, (a,), vjp)


# ---------------------------------------------------------------------------
# transforms (full complex spectra; adjoints are conjugate-scaled inverses)


def fft(a, axes):
    """Forward transform of a real array over ``axes`` (unscaled, full spectrum)."""
    av = _val(a)
    axes = tuple(axes)
    out = np.fft.fftn(av, axes=axes)
    m = float(np.prod([av.shape[ax] for ax in axes]))

    def vjp(w, tracked):
        return [(tracked[0], np.fft.ifftn(w, axes=axes).real * m)]

    return _apply("fft", out, (a,), vjp)


def ifft_real(a, axes):
    """Inverse transform over ``axes``, real part (projects onto Hermitian input)."""
    av = _val(a)
    axes = tuple(axes)
    out = np.fft.ifftn(av, axes=axes).real
    m = float(np.prod([av.shape[ax] for ax in axes]))

    def vjp(w, tracked):
        return [(tracked[0], np.fft.fftn(w, axes=axes) / m)]

    return _apply("ifft_real", out, (a,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities


def gelu(a):
    """x * Phi(x) with the exact Gaussian CDF; gelu(0) = 0."""
    av = _val(a)
    cdf = 0.5 * (1.0 + erf(av * _SQRT1_2))
    out = av * cdf

    def vjp(w, tracked):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * av * av)
        return [(tracked[0], w * (cdf + av * pdf))]

    return _apply("gelu", out, (a,), vjp)


def tanh(a):
    av = _val(a)
    out = np.tanh(av)

    def vjp(w, tracked):
        return [(tracked[0], w * (1.0 - out * out))]

    return _apply("tanh", out, (a,), vjp)


# ---------------------------------------------------------------------------
# affine / contraction maps


def affine(x, w, b):
    """Pointwise channel map: x @ w + b on the last axis."""
    xv, wv, bv = _val(x), _val(w), _val(b)
    out = (xv.reshape(-1, xv.shape[-1]) @ wv).reshape(xv.shape[:-1] + (wv.shape[1],)) + bv

    def vjp(g, tracked):
        gflat = g.reshape(-1, g.shape[-1])
        gx = (gflat @ wv.T).reshape(xv.shape)
        gw = xv.reshape(-1, xv.shape[-1]).T @ gflat
        gb = gflat.sum(axis=0)
        return [(tracked[0], gx), (tracked[1], gw), (tracked[2], gb)]

    return _apply("affine", out, (x, w, b), vjp)


def matmul_nt(a, b):
    """a @ b.T with a (..., k) and b (m, k); returns (..., m)."""
    av, bv = _val(a), _val(b)
    out = av @ bv.T

    def vjp(g, tracked):
        ga = g @ bv
        gb = np.tensordot(
            g.reshape(-1, g.shape[-1]), av.reshape(-1, av.shape[-1]), axes=(0, 0)
        )
        return [(tracked[0], ga), (tracked[1], gb)]

    return _apply("matmul_nt", out, (a, b), vjp)


def mode_mix(vhat, r, kx_idx, ky_idx=None):
    """Per-mode complex channel mixing on a retained mode block.

    1D: ``vhat`` (..., n, w) complex, ``r`` (m, w, w) complex, ``kx_idx``
    the retained row indices. 2D: ``vhat`` (..., nx, ny, w), ``r``
    (mx, my, w, w) with ``kx_idx``/``ky_idx`` the retained index vectors.
    Modes outside the block map to zero. The real projection of the
    following inverse transform supplies the Hermitian half.
    """
    vv, rv = _val(vhat), _val(r)
    kx_idx = np.asarray(kx_idx)
    if ky_idx is None:
        block = vv[..., kx_idx, :]
        mixed = np.einsum("...kw,kwv->...kv", block, rv)
        out = np.zeros_like(vv)
        out[..., kx_idx, :] = mixed

        def vjp(g, tracked):
            gblock = g[..., kx_idx, :]
            gv = np.zeros_like(vv)
            gv[..., kx_idx, :] = np.einsum("...kv,kwv->...kw", gblock, np.conj(rv))
            m, w = block.shape[-2], block.shape[-1]
            gr = np.einsum(
                "bkw,bkv->kwv",
                np.conj(block).reshape(-1, m, w),
                gblock.reshape(-1, m, gblock.shape[-1]),
            )
            return [(tracked[0], gv), (tracked[1], gr)]

        return _apply("mode_mix", out, (vhat, r), vjp)

    ky_idx = np.asarray(ky_idx)
    block = vv[..., kx_idx[:, None], ky_idx[None, :], :]
    mixed = np.einsum("...xyw,xywv->...xyv", block, rv)
    out = np.zeros_like(vv)
    out[..., kx_idx[:, None], ky_idx[None, :], :] = mixed

    def vjp2(g, tracked):
        gblock = g[..., kx_idx[:, None], ky_idx[None, :], :]
        gv = np.zeros_like(vv)
        gv[..., kx_idx[:, None], ky_idx[None, :], :] = np.einsum(
            "...xyv,xywv->...xyw", gblock, np.conj(rv)
        )
        mx, my, w = block.shape[-3], block.shape[-2], block.shape[-1]
        gr = np.einsum(
            "bxyw,bxyv->xywv",
            np.conj(block).reshape(-1, mx, my, w),
            gblock.reshape(-1, mx, my, gblock.shape[-1]),
        )
        return [(tracked[0], gv), (tracked[1], gr)]

    return _apply("mode_mix2d", out, (vhat, r), vjp2)


def _partial_dft_mats(n: int, idx: np.ndarray):
    """Forward rows exp(-2*pi*i*j*k/n) and inverse columns (1/n)exp(+...)."""
    j = np.arange(n)
    phase = 2.0 * np.pi * np.outer(idx, j) / n
    fwd = np.exp(-1j * phase)  # (m, n)
    inv = np.exp(1j * phase).T / n  # (n, m)
    return fwd, inv


_DFT_CACHE: dict = {}


def _dft_pair(n: int, idx_key: tuple):
    key = (n, idx_key)
    if key not in _DFT_CACHE:
        _DFT_CACHE[key] = _partial_dft_mats(n, np.asarray(idx_key))
    return _DFT_CACHE[key]


def _axis_to_front(arr, axis):
    """(..., n, ...) -> (n, rest) plus the info to undo it."""
    moved = np.moveaxis(arr, axis, 0)
    shape = moved.shape
    return np.ascontiguousarray(moved).reshape(shape[0], -1), shape


def _front_to_axis(flat, shape_after, axis, lead):
    out = flat.reshape((lead,) + shape_after[1:])
    return np.moveaxis(out, 0, axis)


def _cmat_dot(mat, arr, axis):
    """complex (m, n) matrix applied along ``axis`` of a real/complex array.

    Matrix components are copied contiguous so the products stay on the
    BLAS fast path (``.real`` of a complex array is a strided view).
    """
    flat, shape = _axis_to_front(arr, axis)
    if np.iscomplexobj(flat):
        res = np.ascontiguousarray(mat) @ flat
    else:
        mr = np.ascontiguousarray(mat.real)
        mi = np.ascontiguousarray(mat.imag)
        res = (mr @ flat) + 1j * (mi @ flat)
    return _front_to_axis(res, shape, axis, mat.shape[0])


def _cmat_dot_real(mat, arr, axis):
    """Real part of a complex matrix applied along ``axis``."""
    flat, shape = _axis_to_front(arr, axis)
    mr = np.ascontiguousarray(mat.real)
    if np.iscomplexobj(flat):
        mi = np.ascontiguousarray(mat.imag)
        res = mr @ np.ascontiguousarray(flat.real) - mi @ np.ascontiguousarray(flat.imag)
    else:
        res = mr @ flat
    return _front_to_axis(res, shape, axis, mat.shape[0])


def _mode_channel_mix(c, rv):
    """(..., m, w) @ (m, w, w') per retained mode, batched by flattening."""
    m, w = c.shape[-2], c.shape[-1]
    cb = c.reshape(-1, m, w).transpose(1, 0, 2)  # (m, B, w)
    mixed = np.matmul(cb, rv)  # (m, B, w')
    return mixed.transpose(1, 0, 2).reshape(c.shape[:-1] + (rv.shape[-1],))


def spectral_conv1d(v, r, kx_idx):
    """Low-mode spectral convolution: Re(iDFT(DFT(v)|_idx @ R)).

    Equivalent to ifft_real(mode_mix(fft(v, (-2,)), r, kx_idx), (-2,)) but
    evaluated with partial DFT matrices, which is much cheaper when the
    retained block is small. ``v`` is real (..., n, w).
    """
    vv, rv = _val(v), _val(r)
    n = vv.shape[-2]
    fwd, inv = _dft_pair(n, tuple(int(k) for k in kx_idx))
    c = _cmat_dot(fwd, vv, -2)  # (..., m, w)
    mixed = _mode_channel_mix(c, rv)
    out = _cmat_dot_real(inv, mixed, -2)

    def vjp(w, tracked):
        cw = _cmat_dot(np.conj(inv).T, w, -2)  # (..., m, w') complex
        m_modes, win = c.shape[-2], c.shape[-1]
        cb = np.conj(c).reshape(-1, m_modes, win)
        cwb = cw.reshape(-1, m_modes, cw.shape[-1])
        gr = np.matmul(cb.transpose(1, 2, 0), cwb.transpose(1, 0, 2))
        gc = _mode_channel_mix(cw, np.conj(rv).transpose(0, 2, 1))
        gv = _cmat_dot_real(np.conj(fwd).T, gc, -2)
        return [(tracked[0], gv), (tracked[1], gr)]

    return _apply("spectral_conv1d", out, (v, r), vjp)


def spectral_conv2d(v, r, kx_idx, ky_idx):
    """2D analogue of :func:`spectral_conv1d` on real (..., nx, ny, w)."""
    vv, rv = _val(v), _val(r)
    nx, ny = vv.shape[-3], vv.shape[-2]
    fx, invx = _dft_pair(nx, tuple(int(k) for k in kx_idx))  # (mx,nx), (nx,mx)
    fy, invy = _dft_pair(ny, tuple(int(k) for k in ky_idx))

    def apply2(a, mat_x, mat_y, real_out=False):
        # mat_x (P, X) contracts the -3 axis, mat_y (Q, Y) the -2 axis
        t = _cmat_dot(mat_y, a, -2)
        if real_out:
            return _cmat_dot_real(mat_x, t, -3)
        return _cmat_dot(mat_x, t, -3)

    c = apply2(vv, fx, fy)  # (..., mx, my, w)
    mx_, my_ = c.shape[-3], c.shape[-2]
    rflat = rv.reshape(mx_ * my_, rv.shape[-2], rv.shape[-1])
    mixed = _mode_channel_mix(
        c.reshape(c.shape[:-3] + (mx_ * my_, c.shape[-1])), rflat
    ).reshape(c.shape[:-1] + (rv.shape[-1],))
    out = apply2(mixed, invx, invy, real_out=True)

    def vjp(w, tracked):
        cw = apply2(w, np.conj(invx).T, np.conj(invy).T)  # (..., mx, my, w')
        win = c.shape[-1]
        cb = np.conj(c).reshape(-1, mx_ * my_, win)
        cwb = cw.reshape(-1, mx_ * my_, cw.shape[-1])
        gr = np.matmul(cb.transpose(1, 2, 0), cwb.transpose(1, 0, 2))
        gr = gr.reshape(mx_, my_, win, cw.shape[-1])
        gc = _mode_channel_mix(
            cw.reshape(cw.shape[:-3] + (mx_ * my_, cw.shape[-1])),
            np.conj(rflat).transpose(0, 2, 1),
        ).reshape(cw.shape[:-1] + (win,))
        gv = apply2(gc, np.conj(fx).T, np.conj(fy).T, real_out=True)
        return [(tracked[0], gv), (tracked[1], gr)]

    return _apply("spectral_conv2d", out, (v, r), vjp)


# ---------------------------------------------------------------------------
# structure: slicing, concatenation, reshape, reductions


def slice_axis(a, sl: slice, axis: int):
    av = _val(a)
    index = [slice(None)] * av.ndim
    index[axis] = sl
    index = tuple(index)
    out = av[index]

    def vjp(w, tracked):
        g = np.zeros_like(av)
        g[index] = w
        return [(tracked[0], g)]

    return _apply("slice_axis", out, (a,), vjp)


def index_axis(a, i: int, axis: int):
    """Take one slice at integer index ``i``; adjoint scatters into zeros."""
    av = _val(a)
    index = [slice(None)] * av.ndim
    index[axis] = i
    index = tuple(index)
    out = av[index]

    def vjp(w, tracked):
        g = np.zeros_like(av)
        g[index] = w
        return [(tracked[0], g)]

    return _apply("index_axis", out, (a,), vjp)


def concat(parts, axis: int):
    vals = [_val(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)

    def vjp(w, tracked):
        grads = []
        for i, t in enumerate(tracked):
            index = [slice(None)] * w.ndim
            index[axis] = slice(offsets[i], offsets[i + 1])
            grads.append((t, _real_like(w[tuple(index)], vals[i])))
        return grads

    return _apply("concat", out, tuple(parts), vjp)


def reshape(a, shape):
    av = _val(a)
    out = av.reshape(shape)

    def vjp(w, tracked):
        return [(tracked[0], w.reshape(av.shape))]

    return _apply("reshape", out, (a,), vjp)


def reduce_sum(a, axis=None):
    av = _val(a)
    out = av.sum(axis=axis)

    def vjp(w, tracked):
        if axis is None:
            g = np.broadcast_to(w, av.shape)
        else:
            g = np.broadcast_to(np.expand_dims(w, axis), av.shape)
        return [(tracked[0], np.ascontiguousarray(g))]

    return _apply("reduce_sum", out, (a,), vjp)


def reduce_mean(a, axis=None):
    av = _val(a)
    count = av.size if axis is None else av.shape[axis]
    return scale(reduce_sum(a, axis=axis), 1.0 / count)


def softmin3(a, b, c, gamma: float):
    """Smoothed minimum -gamma*log(exp(-a/g)+exp(-b/g)+exp(-c/g)), one DP cell.

    Stable against +inf sentinels (absent entries drop out of the sum).
    """
    av, bv, cv = _val(a), _val(b), _val(c)
    stack = np.stack(np.broadcast_arrays(av, bv, cv))
    lo = np.min(stack, axis=0)
    z = np.exp(-(stack - lo) / gamma)
    s = z.sum(axis=0)
    out = lo - gamma * np.log(s)

    def vjp(w, tracked):
        p = z / s
        return [(tracked[i], _unbroadcast(w * p[i], np.asarray(v).shape))
                for i, v in enumerate((av, bv, cv))]

    return _apply("softmin3", out, (a, b, c), vjp)


# ---------------------------------------------------------------------------
# fused soft-DTW dynamic program (value + reverse-DP adjoint in one record)


def _sq_dist_matrix(x, y):
    if x.ndim == 1:
        d = x[:, None] - y[None, :]
        return d * d
    diff = x[:, None, :] - y[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _softdtw_forward(dist, gamma):
    n, m = dist.shape
    r = np.full((n + 1, m + 1), np.inf)
    r[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            candidates = np.array([r[i - 1, j], r[i, j - 1], r[i - 1, j - 1]])
            lo = candidates.min()
            if np.isinf(lo):
                soft = lo
            else:
                soft = lo - gamma * np.log(np.exp(-(candidates - lo) / gamma).sum())
            r[i, j] = dist[i - 1, j - 1] + soft
    return r


def _softdtw_backward(dist, r, gamma):
    # standard reverse DP: E[i,j] = expected path occupancy of cell (i,j)
    n, m = dist.shape
    e = np.zeros((n + 2, m + 2))
    e[n + 1, m + 1] = 1.0
    rr = np.full((n + 2, m + 2), -np.inf)
    rr[1 : n + 1, 1 : m + 1] = r[1:, 1:]
    rr[n + 1, m + 1] = r[n, m]
    d = np.zeros((n + 2, m + 2))
    d[1 : n + 1, 1 : m + 1] = dist
    for i in range(n, 0, -1):
        for j in range(m, 0, -1):
            a = np.exp((rr[i + 1, j] - rr[i, j] - d[i + 1, j]) / gamma)
            b = np.exp((rr[i, j + 1] - rr[i, j] - d[i, j + 1]) / gamma)
            c = np.exp((rr[i + 1, j + 1] - rr[i, j] - d[i + 1, j + 1]) / gamma)
            e[i, j] = a * e[i + 1, j] + b * e[i, j + 1] + c * e[i + 1, j + 1]
    return e[1 : n + 1, 1 : m + 1]


def softdtw(x, y, gamma: float):
    """Soft dynamic time warping cost of two sequences (squared-Euclidean cells).

    Accepts (n,) scalar sequences or (n, d) vector sequences. Differentiable
    in both arguments; the adjoint runs the reverse occupancy DP.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    xv, yv = _val(x), _val(y)
    dist = _sq_dist_matrix(xv, yv)
    r = _softdtw_forward(dist, gamma)
    out = np.asarray(r[-1, -1])

    def vjp(w, tracked):
        e = _softdtw_backward(dist, r, gamma)
        if xv.ndim == 1:
            gx = 2.0 * (e.sum(axis=1) * xv - e @ yv)
            gy = 2.0 * (e.sum(axis=0) * yv - e.T @ xv)
        else:
            gx = 2.0 * (e.sum(axis=1)[:, None] * xv - e @ yv)
            gy = 2.0 * (e.sum(axis=0)[:, None] * yv - e.T @ xv)
        return [(tracked[0], w * gx), (tracked[1], w * gy)]

    return _apply("softdtw", out, (x, y), vjp)


# ---------------------------------------------------------------------------
# stop-gradient and finite-difference verification


def stop_gradient(a):
    """Forward identity whose adjoint contributes zero."""
    if isinstance(a, Var):
        return Var(a.value)
    return np.asarray(a)


@dataclass
class FdReport:
    """Central-difference vs reverse-mode comparison on sampled coordinates."""

    max_rel_err: float
    max_abs_err: float
    coords: list
    fd_values: np.ndarray
    ad_values: np.ndarray

    def __str__(self) -> str:
        return (
            f"fd check: max rel err {self.max_rel_err:.3e}, "
            f"max abs err {self.max_abs_err:.3e} over {len(self.coords)} coords"
        )


def fd_check(f, x0, step: float = 1e-5, samples: int = 20, seed: int = 0) -> FdReport:
    """Compare the reverse-mode gradient of ``f`` against central differences.

    ``f`` maps one array to a scalar and must be written in terms of the
    primitives in this module (it is called once under a tape with a Var
    argument, then eagerly on perturbed ndarrays).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    with Tape() as tape:
        xv = Var(x0)
        out = f(xv)
        grad = tape.gradient(out, xv)

    rng = np.random.default_rng(seed)
    flat = x0.size
    count = min(samples, flat)
    coords = rng.choice(flat, size=count, replace=False)

    fd_vals = np.empty(count)
    ad_vals = np.empty(count)
    for i, c in enumerate(coords):
        e = np.zeros(flat)
        e[c] = step
        e = e.reshape(x0.shape)
        fp = float(_val(f(x0 + e)))
        fm = float(_val(f(x0 - e)))
        fd_vals[i] = (fp - fm) / (2.0 * step)
        ad_vals[i] = grad.reshape(-1)[c]

    abs_err = np.abs(fd_vals - ad_vals)
    denom = np.maximum(np.abs(fd_vals), np.abs(ad_vals))
    rel = abs_err / np.where(denom > 1e-12, denom, 1.0)
    return FdReport(
        max_rel_err=float(rel.max()),
        max_abs_err=float(abs_err.max()),
        coords=[int(c) for c in coords],
        fd_values=fd_vals,
        ad_values=ad_vals,
    )
