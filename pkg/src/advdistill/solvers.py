"""
Pseudospectral time integration for 1D viscous Burgers (AB2/CN) and the 2D
Navier-Stokes vorticity-streamfunction system (CN with explicit-Euler or
AB2 advection), with forcing, snapshotting and blow-up detection.

The step math is written once against the autodiff primitives: called with
plain ndarrays and no active tape it runs untaped (the fast path used for
datasets and detached teachers); called with a Var under a Tape it records
the full computation for reverse-mode gradients. Both paths execute the
identical numpy operations, so forward values agree bit for bit.

States advance as full complex spectra; nonlinear terms are formed
pointwise in physical space and dealiased with the 2/3 mask. The first
AB2 step uses a zero previous nonlinear term. Forcing is steady (named
patterns or a custom field), so the explicit and midpoint forcing
evaluations of the two schemes coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .spectral import Field, SpectralGrid, Spectrum, fft_forward, spectral_derivative

__all__ = [
    "ForcingSpec",
    "SolverConfig",
    "Trajectory",
    "BlowupError",
    "forcing_pattern",
    "curl_forcing",
    "detect_blowup",
    "burgers_step",
    "ns_step",
    "solve",
    "solve_traced",
    "SpectralConsts",
]

DEFAULT_BLOWUP_GUARD = 1e8


class BlowupError(RuntimeError):
    """Numerical divergence during a solve.

    ``snapshots`` carries the (time, state) pairs recorded before the
    offending step so partial trajectories survive.
    """

    def __init__(self, step: int, message: str = "", snapshots: list | None = None):
        self.step = step
        self.snapshots = snapshots or []
        super().__init__(message or f"solver blow-up at step {step}")


@dataclass(frozen=True)
class ForcingSpec:
    """Steady vorticity forcing: a named curl pattern or a custom field."""

    pattern: str = "none"
    amplitude: float = 0.1
    custom: Field | None = None

    def build(self, grid: SpectralGrid) -> np.ndarray:
        if self.pattern == "custom":
            if self.custom is None:
                raise ValueError("custom forcing requires a field")
            if self.custom.grid.n != grid.n or self.custom.grid.dims != grid.dims:
                raise ValueError("custom forcing grid does not match solver grid")
            return self.custom.values
        return forcing_pattern(self.pattern, grid, self.amplitude).values


@dataclass(frozen=True)
class SolverConfig:
    """Time-integration configuration.

    ``t_end`` must be an integer multiple of ``dt``; snapshots (every
    ``snapshot_spacing`` time units) land exactly on step boundaries.
    ``include_nonlinear=False`` integrates the linear (diffusion-only)
    part, used by the closed-form decay oracles.
    """

    equation: str  # "burgers1d" | "ns2d"
    grid: SpectralGrid
    nu: float
    dt: float
    t_end: float
    scheme: str = "ab2cn"  # "ab2cn" | "cn_euler"
    snapshot_spacing: float | None = None
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    include_nonlinear: bool = True
    blowup_guard: float = DEFAULT_BLOWUP_GUARD

    def __post_init__(self) -> None:
        if self.equation not in ("burgers1d", "ns2d"):
            raise ValueError(f"unknown equation {self.equation!r}")
        if self.scheme not in ("ab2cn", "cn_euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.equation == "burgers1d" and self.grid.dims != 1:
            raise ValueError("burgers1d needs a 1D grid")
        if self.equation == "ns2d" and self.grid.dims != 2:
            raise ValueError("ns2d needs a 2D grid")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if abs(self.t_end / self.dt - round(self.t_end / self.dt)) > 1e-9:
            raise ValueError("t_end must be an integer multiple of dt")
        if self.snapshot_spacing is not None:
            ratio = self.snapshot_spacing / self.dt
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise ValueError("snapshot_spacing must be a positive multiple of dt")

    @property
    def nsteps(self) -> int:
        return int(round(self.t_end / self.dt))

    def with_horizon(self, t_end: float) -> "SolverConfig":
        return replace(self, t_end=t_end)


@dataclass
class Trajectory:
    """Snapshots of a solve. ``states[i]`` is the field at ``times[i]``."""

    times: list[float]
    states: list[Field]
    blown_up: bool = False
    blowup_step: int | None = None

    @property
    def final(self) -> Field:
        return self.states[-1]


def forcing_pattern(name: str, grid: SpectralGrid, amplitude: float = 0.1) -> Field:
    """Deterministic named forcing patterns (mean-zero vorticity sources)."""
    if grid.dims != 2:
        raise ValueError("forcing patterns are defined on 2D grids")
    if name == "none":
        return Field(grid, np.zeros(grid.shape))
    x, y = np.meshgrid(*grid.coords(), indexing="ij")
    L = grid.length
    if name == "diagonal":
        phase = 2.0 * np.pi * (x + y) / L
        vals = amplitude * (np.sin(phase) + np.cos(phase))
    elif name == "isoCircles":
        # smooth periodic surrogate for concentric rings around the center
        rx = 0.5 * (1.0 - np.cos(2.0 * np.pi * (x / L - 0.5)))
        ry = 0.5 * (1.0 - np.cos(2.0 * np.pi * (y / L - 0.5)))
        vals = amplitude * np.cos(4.0 * np.pi * (rx + ry))
    elif name == "petals":
        vals = amplitude * (
            np.sin(4.0 * np.pi * x / L) * np.sin(4.0 * np.pi * y / L)
            + 0.5 * np.cos(2.0 * np.pi * (x - y) / L)
        )
    else:
        raise ValueError(f"unknown forcing pattern {name!r}")
    vals = vals - vals.mean()
    return Field(grid, vals)


def curl_forcing(fx: Field, fy: Field) -> Field:
    """Vorticity source of a vector body force: d(fy)/dx - d(fx)/dy."""
    if fx.grid is not fy.grid and fx.grid != fy.grid:
        raise ValueError("force components live on different grids")
    gy = spectral_derivative(fft_forward(fy), axis=0, order=1)
    gx = spectral_derivative(fft_forward(fx), axis=1, order=1)
    g = np.fft.irfftn(gy.coeffs - gx.coeffs, s=fx.grid.shape, axes=(0, 1))
    return Field(fx.grid, g)


def detect_blowup(f, guard: float = DEFAULT_BLOWUP_GUARD) -> bool:
    """True iff the field has non-finite values or exceeds the guard."""
    vals = f.values if isinstance(f, Field) else np.asarray(f)
    if not np.isfinite(vals).all():
        return True
    return bool(np.max(np.abs(vals)) > guard)


# ---------------------------------------------------------------------------
# full-spectrum constants


@dataclass(frozen=True)
class SpectralConsts:
    """Full-layout spectral coefficient arrays for one grid."""

    axes: tuple
    ik: tuple            # first-derivative factors per axis, Nyquist zeroed
    k2: np.ndarray       # radian |k|^2
    mask: np.ndarray     # 2/3 dealias mask
    inv_k2: np.ndarray   # 1/k2 with the zero mode set to 0 (Poisson solve)


def build_consts(grid: SpectralGrid) -> SpectralConsts:
    n, L = grid.n, grid.length
    k1 = np.fft.fftfreq(n) * n
    scale = 2.0 * np.pi / L
    ik1 = 1j * scale * np.where(np.abs(k1) == n // 2, 0.0, k1)
    cutoff = n // 3
    if grid.dims == 1:
        axes = (-1,)
        ik = (ik1,)
        k2 = (scale * k1) ** 2
        mask = np.abs(k1) <= cutoff
    else:
        axes = (-2, -1)
        kx = k1[:, None]
        ky = k1[None, :]
        ik = (ik1[:, None], ik1[None, :])
        k2 = (scale * kx) ** 2 + (scale * ky) ** 2
        mask = (np.abs(kx) <= cutoff) & (np.abs(ky) <= cutoff)
    inv = np.zeros_like(k2)
    nonzero = k2 > 0
    inv[nonzero] = 1.0 / k2[nonzero]
    return SpectralConsts(axes=axes, ik=ik, k2=k2, mask=mask, inv_k2=inv)


def _full_from_half(coeffs: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Hermitian extension of a half-complex spectrum to the full layout."""
    n = grid.n
    if grid.dims == 1:
        full = np.zeros(n, dtype=np.complex128)
        full[: n // 2 + 1] = coeffs
        full[n // 2 + 1 :] = np.conj(coeffs[1 : n // 2][::-1])
        return full
    full = np.zeros((n, n), dtype=np.complex128)
    full[:, : n // 2 + 1] = coeffs
    rows = (-np.arange(n)) % n
    full[:, n // 2 + 1 :] = np.conj(coeffs[rows][:, 1 : n // 2][:, ::-1])
    return full


def _half_from_full(full: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    return full[..., : grid.n // 2 + 1].copy()


# ---------------------------------------------------------------------------
# step math (autodiff-primitive form; works taped and untaped)


def _burgers_rhs(u_hat, consts: SpectralConsts):
    """Dealiased transform of u*u_x."""
    u = ad.ifft_real(u_hat, consts.axes)
    ux = ad.ifft_real(ad.cmul(u_hat, consts.ik[0]), consts.axes)
    nl = ad.mul(u, ux)
    return ad.cmul(ad.fft(nl, consts.axes), consts.mask), u


def _burgers_update(u_hat, nl_hat, prev_nl_hat, consts, dt, nu):
    k2 = consts.k2
    half_visc = 0.5 * dt * nu * k2
    numer = ad.cmul(u_hat, 1.0 - half_visc)
    if nl_hat is not None:
        if prev_nl_hat is None:
            adv = ad.scale(nl_hat, 1.5)
        else:
            adv = ad.sub(ad.scale(nl_hat, 1.5), ad.scale(prev_nl_hat, 0.5))
        numer = ad.sub(numer, ad.scale(adv, dt))
    return ad.cmul(numer, 1.0 / (1.0 + half_visc))


def _ns_rhs(w_hat, consts: SpectralConsts):
    """Dealiased transform of u*w_x + v*w_y via the streamfunction."""
    psi_hat = ad.cmul(w_hat, consts.inv_k2)
    u = ad.ifft_real(ad.cmul(psi_hat, consts.ik[1]), consts.axes)
    v = ad.ifft_real(ad.cmul(psi_hat, -consts.ik[0]), consts.axes)
    wx = ad.ifft_real(ad.cmul(w_hat, consts.ik[0]), consts.axes)
    wy = ad.ifft_real(ad.cmul(w_hat, consts.ik[1]), consts.axes)
    nl = ad.add(ad.mul(u, wx), ad.mul(v, wy))
    vel_max = max(np.max(np.abs(ad.value(u))), np.max(np.abs(ad.value(v))))
    return ad.cmul(ad.fft(nl, consts.axes), consts.mask), vel_max


def _ns_update(w_hat, nl_hat, prev_nl_hat, g_hat, consts, dt, nu, scheme):
    k2 = consts.k2
    half_visc = 0.5 * dt * nu * k2
    numer = ad.cmul(w_hat, 1.0 - half_visc)
    if nl_hat is not None:
        if scheme == "cn_euler" or prev_nl_hat is None:
            adv = nl_hat
        else:
            adv = ad.sub(ad.scale(nl_hat, 1.5), ad.scale(prev_nl_hat, 0.5))
        numer = ad.sub(numer, ad.scale(adv, dt))
    if g_hat is not None:
        numer = ad.add(numer, dt * g_hat)
    return ad.cmul(numer, 1.0 / (1.0 + half_visc))


def burgers_step(
    u_hat: Spectrum, prev_nonlinear_hat: Spectrum | None, cfg: SolverConfig
) -> tuple[Spectrum, Spectrum]:
    """One AB2/CN Burgers step on half-complex spectra.

    The first step passes ``prev_nonlinear_hat=None`` (zero history).
    Returns the advanced state and this step's dealiased nonlinear term.
    """
    grid = u_hat.grid
    consts = build_consts(grid)
    full = _full_from_half(u_hat.coeffs, grid)
    prev = None
    if prev_nonlinear_hat is not None:
        prev = _full_from_half(prev_nonlinear_hat.coeffs, grid)
    if cfg.include_nonlinear:
        nl, _ = _burgers_rhs(full, consts)
    else:
        nl = None
    nxt = _burgers_update(full, nl, prev, consts, cfg.dt, cfg.nu)
    nl_out = nl if nl is not None else np.zeros_like(full)
    return (
        Spectrum(grid, _half_from_full(nxt, grid)),
        Spectrum(grid, _half_from_full(nl_out, grid)),
    )


def ns_step(
    omega_hat: Spectrum,
    prev_nonlinear_hat: Spectrum | None,
    forcing_hat: Spectrum | None,
    cfg: SolverConfig,
) -> tuple[Spectrum, Spectrum]:
    """One vorticity step on half-complex spectra (scheme per ``cfg.scheme``)."""
    grid = omega_hat.grid
    consts = build_consts(grid)
    full = _full_from_half(omega_hat.coeffs, grid)
    prev = None
    if prev_nonlinear_hat is not None:
        prev = _full_from_half(prev_nonlinear_hat.coeffs, grid)
    g = None
    if forcing_hat is not None:
        g = _full_from_half(forcing_hat.coeffs, grid)
    if cfg.include_nonlinear:
        nl, _ = _ns_rhs(full, consts)
    else:
        nl = None
    nxt = _ns_update(full, nl, prev, g, consts, cfg.dt, cfg.nu, cfg.scheme)
    nl_out = nl if nl is not None else np.zeros_like(full)
    return (
        Spectrum(grid, _half_from_full(nxt, grid)),
        Spectrum(grid, _half_from_full(nl_out, grid)),
    )


# ---------------------------------------------------------------------------
# whole solves


def _march(a, cfg: SolverConfig, consts: SpectralConsts, g_hat_full):
    """Generic time march; ``a`` is physical values (ndarray or Var).

    Returns (snapshot list of (time, physical), final physical). Raises
    BlowupError when the guard trips; the recorded tape (if any) raises
    NonFiniteError on Inf/NaN by itself.
    """
    burgers = cfg.equation == "burgers1d"
    if cfg.nsteps == 0:
        return [], a
    state = ad.fft(a, consts.axes)
    prev_nl = None
    snap_every = None
    if cfg.snapshot_spacing is not None:
        snap_every = int(round(cfg.snapshot_spacing / cfg.dt))
    snapshots = []
    guard = cfg.blowup_guard

    for step in range(cfg.nsteps):
        if cfg.include_nonlinear:
            if burgers:
                nl, u_phys = _burgers_rhs(state, consts)
                phys_max = np.max(np.abs(ad.value(u_phys)))
            else:
                nl, phys_max = _ns_rhs(state, consts)
            if not np.isfinite(phys_max) or phys_max > guard:
                raise BlowupError(step, snapshots=snapshots)
        else:
            nl = None
            sv = ad.value(state)
            if not np.isfinite(sv).all():
                raise BlowupError(step, snapshots=snapshots)
        if burgers:
            state = _burgers_update(state, nl, prev_nl, consts, cfg.dt, cfg.nu)
        else:
            state = _ns_update(
                state, nl, prev_nl, g_hat_full, consts, cfg.dt, cfg.nu, cfg.scheme
            )
        prev_nl = nl
        if snap_every is not None and (step + 1) % snap_every == 0 and (step + 1) < cfg.nsteps:
            snapshots.append(((step + 1) * cfg.dt, ad.ifft_real(state, consts.axes)))

    final = ad.ifft_real(state, consts.axes)
    return snapshots, final


def _forcing_full(cfg: SolverConfig, consts: SpectralConsts):
    if cfg.equation != "ns2d":
        return None
    g = cfg.forcing.build(cfg.grid)
    if not np.any(g):
        return None
    return np.fft.fftn(g)


def solve(a: Field, cfg: SolverConfig) -> Trajectory:
    """Integrate from ``a`` to ``t_end`` on the fast (untaped) path.

    Blow-up is flagged on the trajectory with its step index; snapshots
    computed before the blow-up are retained.
    """
    if a.grid.n != cfg.grid.n or a.grid.dims != cfg.grid.dims:
        raise ValueError("initial condition grid does not match solver grid")
    if not np.isfinite(a.values).all():
        raise ValueError("initial condition is not finite")
    consts = build_consts(cfg.grid)
    g_hat = _forcing_full(cfg, consts)
    times = [0.0]
    states = [Field(cfg.grid, a.values.copy())]
    try:
        snapshots, final = _march(a.values, cfg, consts, g_hat)
    except BlowupError as err:
        for t, vals in err.snapshots:
            times.append(t)
            states.append(Field(cfg.grid, vals))
        return Trajectory(times, states, blown_up=True, blowup_step=err.step)
    for t, vals in snapshots:
        times.append(t)
        states.append(Field(cfg.grid, vals))
    times.append(cfg.t_end)
    states.append(Field(cfg.grid, final))
    return Trajectory(times, states)


def solve_traced(a, cfg: SolverConfig, consts: SpectralConsts | None = None):
    """Differentiable solve: ``a`` may be a Var under an active Tape.

    Returns (snapshot list of (time, physical), final physical), where the
    physical states are Vars when the input is tracked. BlowupError /
    NonFiniteError propagate to the caller (the attack's substepping).
    """
    if consts is None:
        consts = build_consts(cfg.grid)
    g_hat = _forcing_full(cfg, consts)
    return _march(a, cfg, consts, g_hat)
