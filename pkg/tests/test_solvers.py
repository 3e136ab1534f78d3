"""Time integration: stepping schemes, forcing, blow-up, differentiability."""

import numpy as np
import pytest

import advdistill.autodiff as ad
from advdistill.autodiff import Tape, Var
from advdistill.grf import KernelSpec, RangeSpec, normalize_range, sample_grf_values
from advdistill.solvers import (
    ForcingSpec,
    SolverConfig,
    burgers_step,
    curl_forcing,
    detect_blowup,
    forcing_pattern,
    ns_step,
    solve,
    solve_traced,
)
from advdistill.spectral import (
    Field,
    enstrophy,
    fft_forward,
    fft_inverse,
    make_grid,
    spectral_derivative,
)


def _grf_range01(grid, seed=0):
    vals = sample_grf_values(KernelSpec("rbf", length_scale=0.1), grid, seed, 1)[0]
    return normalize_range(Field(grid, vals), RangeSpec(0.0, 1.0))


class TestConfig:
    def test_t_end_must_be_multiple_of_dt(self):
        g = make_grid(1, 16, 1.0)
        with pytest.raises(ValueError):
            SolverConfig("burgers1d", g, nu=0.1, dt=0.3, t_end=1.0)

    def test_equation_grid_dim_mismatch(self):
        g = make_grid(2, 16, 1.0)
        with pytest.raises(ValueError):
            SolverConfig("burgers1d", g, nu=0.1, dt=0.1, t_end=1.0)

    def test_snapshot_spacing_validation(self):
        g = make_grid(1, 16, 1.0)
        with pytest.raises(ValueError):
            SolverConfig("burgers1d", g, nu=0.1, dt=0.1, t_end=1.0, snapshot_spacing=0.25)


class TestBurgersStep:
    def test_constant_state_preserved(self):
        g = make_grid(1, 32, 1.0)
        cfg = SolverConfig("burgers1d", g, nu=0.05, dt=0.02, t_end=0.02)
        u_hat = fft_forward(Field(g, np.full(32, 2.7)))
        nxt, _ = burgers_step(u_hat, None, cfg)
        back = fft_inverse(nxt)
        assert np.abs(back.values - 2.7).max() <= 1e-12

    def test_linear_mode_decay_factor(self):
        g = make_grid(1, 64, 1.0)
        nu, dt, k = 0.01, 0.01, 3
        cfg = SolverConfig("burgers1d", g, nu=nu, dt=dt, t_end=dt, include_nonlinear=False)
        x = g.coords()[0]
        amp = 0.8
        u_hat = fft_forward(Field(g, amp * np.sin(2 * np.pi * k * x)))
        nxt, _ = burgers_step(u_hat, None, cfg)
        kappa2 = (2 * np.pi * k) ** 2
        factor = (1 - 0.5 * dt * nu * kappa2) / (1 + 0.5 * dt * nu * kappa2)
        back = fft_inverse(nxt)
        assert np.abs(back.values - amp * factor * np.sin(2 * np.pi * k * x)).max() <= 1e-12

    def test_viscosity_ordering_on_grf(self):
        g = make_grid(1, 256, 1.0)
        a = _grf_range01(g, seed=4)
        finals = {}
        for nu in (5e-4, 1e-2):
            cfg = SolverConfig("burgers1d", g, nu=nu, dt=1e-3, t_end=1.0)
            finals[nu] = enstrophy(solve(a, cfg).final)
        assert finals[1e-2] < finals[5e-4]

    def test_first_step_uses_zero_history(self):
        # stepping with explicit None history must equal the solve() first step
        g = make_grid(1, 64, 1.0)
        cfg = SolverConfig("burgers1d", g, nu=0.01, dt=0.005, t_end=0.005)
        a = _grf_range01(g, seed=1)
        nxt, _ = burgers_step(fft_forward(a), None, cfg)
        traj = solve(a, cfg)
        assert np.abs(fft_inverse(nxt).values - traj.final.values).max() <= 1e-12


class TestNsStep:
    def test_zero_state_zero_forcing_fixed_point(self):
        g = make_grid(2, 32, 1.0)
        cfg = SolverConfig("ns2d", g, nu=1e-3, dt=0.01, t_end=0.01, scheme="cn_euler")
        w_hat = fft_forward(Field(g, np.zeros((32, 32))))
        nxt, _ = ns_step(w_hat, None, None, cfg)
        assert np.abs(nxt.coeffs).max() == 0.0

    def test_unforced_enstrophy_non_increasing(self):
        g = make_grid(2, 32, 1.0)
        x, y = np.meshgrid(*g.coords(), indexing="ij")
        w0 = Field(g, np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y) + 0.5 * np.sin(2 * np.pi * (x + y)))
        for scheme in ("cn_euler", "ab2cn"):
            cfg = SolverConfig("ns2d", g, nu=5e-2, dt=5e-3, t_end=0.25,
                               snapshot_spacing=5e-3, scheme=scheme)
            traj = solve(w0, cfg)
            z = np.array([enstrophy(s) for s in traj.states])
            assert np.all(z[1:] <= z[:-1] * (1 + 1e-12)), scheme

    def test_forced_enstrophy_increases_over_frames(self, ns_dataset):
        z = np.array([
            [enstrophy(Field(ns_dataset.grid, fr)) for fr in stack]
            for stack in ns_dataset.frames
        ]).mean(axis=0)
        assert np.all(np.diff(z) > 0)
        assert z[-1] > z[0]

    def test_zero_mode_preserved_with_meanfree_forcing(self):
        g = make_grid(2, 32, 1.0)
        cfg = SolverConfig("ns2d", g, nu=1e-3, dt=0.01, t_end=0.01,
                           forcing=ForcingSpec("diagonal", amplitude=0.5))
        rng = np.random.default_rng(0)
        w = Field(g, rng.normal(size=(32, 32)) + 1.3)
        nxt, _ = ns_step(fft_forward(w), None, fft_forward(forcing_pattern("diagonal", g, 0.5)), cfg)
        assert abs(nxt.coeffs[0, 0] - w.values.mean() * g.npoints) <= 1e-9 * g.npoints


class TestSolve:
    def test_zero_horizon_identity(self):
        g = make_grid(1, 32, 1.0)
        cfg = SolverConfig("burgers1d", g, nu=0.01, dt=0.01, t_end=0.0)
        a = _grf_range01(g, seed=2)
        traj = solve(a, cfg)
        assert np.array_equal(traj.final.values, a.values)

    def test_heat_mode_closed_form_100_steps(self):
        g = make_grid(1, 64, 1.0)
        nu, dt, k, steps = 0.01, 0.01, 2, 100
        cfg = SolverConfig("burgers1d", g, nu=nu, dt=dt, t_end=dt * steps,
                           include_nonlinear=False)
        x = g.coords()[0]
        a = Field(g, np.sin(2 * np.pi * k * x))
        traj = solve(a, cfg)
        kappa2 = (2 * np.pi * k) ** 2
        factor = ((1 - 0.5 * dt * nu * kappa2) / (1 + 0.5 * dt * nu * kappa2)) ** steps
        assert np.abs(traj.final.values - factor * a.values).max() <= 1e-10

    def test_ns_frame_count_matches_horizon(self):
        # 19 time units at unit spacing: frames at t=0..19, i.e. 20 per sample
        g = make_grid(2, 16, 1.0)
        cfg = SolverConfig("ns2d", g, nu=1e-3, dt=0.02, t_end=19.0, snapshot_spacing=1.0,
                           forcing=ForcingSpec("diagonal", amplitude=0.5))
        vals = sample_grf_values(KernelSpec("rbf", length_scale=0.3), g, 3, 1)[0]
        traj = solve(Field(g, vals), cfg)
        assert len(traj.states) == 20
        assert all(np.isfinite(s.values).all() for s in traj.states)

    def test_blowup_flagged_with_partial_trajectory(self):
        g = make_grid(1, 64, 1.0)
        cfg = SolverConfig("burgers1d", g, nu=1e-6, dt=0.05, t_end=2.0,
                           snapshot_spacing=0.05, blowup_guard=1e4)
        x = g.coords()[0]
        a = Field(g, 30.0 * np.sin(2 * np.pi * x))  # CFL-violating amplitude
        traj = solve(a, cfg)
        assert traj.blown_up
        assert traj.blowup_step is not None
        assert all(np.isfinite(s.values).all() for s in traj.states)

    def test_mean_preserved_over_time(self):
        g = make_grid(1, 128, 1.0)
        cfg = SolverConfig("burgers1d", g, nu=5e-3, dt=1e-3, t_end=0.5)
        a = _grf_range01(g, seed=6)
        traj = solve(a, cfg)
        assert abs(traj.final.values.mean() - a.values.mean()) <= 1e-12


class TestForcing:
    def test_curl_of_single_component(self):
        g = make_grid(2, 32, 1.0)
        x, _ = np.meshgrid(*g.coords(), indexing="ij")
        fy = Field(g, np.sin(2 * np.pi * x))
        fx = Field(g, np.zeros((32, 32)))
        gfield = curl_forcing(fx, fy)
        assert np.abs(gfield.values - 2 * np.pi * np.cos(2 * np.pi * x)).max() <= 1e-10

    def test_curl_of_gradient_vanishes(self):
        g = make_grid(2, 32, 1.0)
        x, y = np.meshgrid(*g.coords(), indexing="ij")
        phi = np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
        fx = fft_inverse(spectral_derivative(fft_forward(Field(g, phi)), 0, 1))
        fy = fft_inverse(spectral_derivative(fft_forward(Field(g, phi)), 1, 1))
        gfield = curl_forcing(fx, fy)
        assert np.abs(gfield.values).max() <= 1e-10

    def test_none_pattern_zero(self):
        g = make_grid(2, 16, 1.0)
        assert np.all(forcing_pattern("none", g).values == 0.0)

    def test_named_patterns_deterministic_and_mean_free(self):
        g = make_grid(2, 32, 1.0)
        for name in ("diagonal", "isoCircles", "petals"):
            a = forcing_pattern(name, g, 0.3)
            b = forcing_pattern(name, g, 0.3)
            assert np.array_equal(a.values, b.values)
            assert abs(a.values.mean()) <= 1e-15

    def test_diagonal_spectrum_on_the_diagonal(self):
        g = make_grid(2, 32, 1.0)
        f = forcing_pattern("diagonal", g, 0.1)
        coeffs = np.fft.fftn(f.values)
        mags = np.abs(coeffs)
        hot = np.argwhere(mags > 1e-9)
        assert set(map(tuple, hot)) == {(1, 1), (31, 31)}


class TestDetectBlowup:
    def test_finite_false(self, rng):
        g = make_grid(1, 16, 1.0)
        assert not detect_blowup(Field(g, rng.normal(size=16)))

    def test_inf_cell_true(self):
        vals = np.zeros(16)
        vals[3] = np.inf
        assert detect_blowup(vals)

    def test_guard_threshold_exact(self):
        vals = np.zeros(8)
        vals[0] = 1e8
        assert not detect_blowup(vals)
        vals[0] = 1.0000001e8
        assert detect_blowup(vals)


class TestInvariants:
    def test_translation_equivariance(self):
        g = make_grid(1, 128, 1.0)
        cfg = SolverConfig("burgers1d", g, nu=5e-3, dt=1e-3, t_end=0.2)
        a = _grf_range01(g, seed=8)
        shift = 17
        t1 = solve(a, cfg).final.values
        t2 = solve(Field(g, np.roll(a.values, shift)), cfg).final.values
        assert np.abs(np.roll(t1, shift) - t2).max() <= 1e-8

    def test_ns_translation_equivariance_unforced(self):
        g = make_grid(2, 32, 1.0)
        cfg = SolverConfig("ns2d", g, nu=1e-3, dt=0.01, t_end=0.2)
        vals = sample_grf_values(KernelSpec("rbf", length_scale=0.2), g, 9, 1)[0]
        shift = (5, 11)
        t1 = solve(Field(g, vals), cfg).final.values
        t2 = solve(Field(g, np.roll(vals, shift, axis=(0, 1))), cfg).final.values
        assert np.abs(np.roll(t1, shift, axis=(0, 1)) - t2).max() <= 1e-8

    def test_scheme_b_second_order_in_time(self):
        # advection-dominated run: halving dt cuts the error vs a dt/8
        # reference by roughly 4x (second-order advection + CN diffusion)
        g = make_grid(2, 32, 1.0)
        vals = sample_grf_values(KernelSpec("rbf", length_scale=0.25), g, 12, 1)[0]
        a = Field(g, vals)

        def terminal(dt):
            cfg = SolverConfig("ns2d", g, nu=1e-4, dt=dt, t_end=0.4, scheme="ab2cn")
            return solve(a, cfg).final.values

        ref = terminal(0.4 / 320)  # dt/8 reference
        e1 = np.linalg.norm(terminal(0.01) - ref)
        e2 = np.linalg.norm(terminal(0.005) - ref)
        assert 3.0 <= e1 / e2 <= 5.0

    def test_adjoint_dot_product_multi_step(self, rng):
        g = make_grid(1, 64, 1.0)
        a0 = _grf_range01(g, seed=13).values
        for steps in (1, 2, 10):
            cfg = SolverConfig("burgers1d", g, nu=0.01, dt=0.005, t_end=0.005 * steps)

            def run(v):
                _, fin = solve_traced(v, cfg)
                return fin

            w = rng.normal(size=64)
            with Tape() as t:
                xv = Var(a0)
                y = run(xv)
                grad = t.gradient(y, xv, seed=w)
            d = rng.normal(size=64)
            eps = 1e-6
            jd = (run(a0 + eps * d) - run(a0 - eps * d)) / (2 * eps)
            lhs = np.sum(jd * w)
            rhs = np.sum(d * grad)
            assert abs(lhs - rhs) <= 1e-5 * max(abs(lhs), 1e-12)

    def test_traced_forward_bit_identical_to_fast(self):
        g = make_grid(1, 64, 1.0)
        cfg = SolverConfig("burgers1d", g, nu=0.01, dt=0.005, t_end=0.1)
        a = _grf_range01(g, seed=14)
        fast = solve(a, cfg).final.values
        with Tape():
            _, fin = solve_traced(Var(a.values), cfg)
        assert np.array_equal(fast, ad.value(fin))
