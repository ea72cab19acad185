import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinfp.core import Frame, KineticParams, PhaseGrid, SourceDecomposition, SpectralField, mode_vectors, rescale_field
from kinfp.io import GeneratorSpec, generate_source
from kinfp.kolmogorov import (
    apply_symbol, apply_T, apply_T_star, backward_growth, kernel_K, kernel_values, phase_integral, solve_backward,
    solve_cauchy, solve_forward, step_coefficients,
)
from kinfp.norms import DegenerateModeError, Hdot_v, Hdot_x, L2, TimeMode, norm, trapezoid_weights
from oracles import dense_operator, heat_mode_duhamel, phase_oracle, scalar_ode


def grid(**kw):
    base = dict(n_x=8, n_v=16, half_len_x=math.pi, half_len_v=math.pi, t_start=0.0, t_end=1.0, n_t=20)
    base.update(kw)
    return PhaseGrid(**base)


class TestPhaseIntegral:
    @pytest.mark.parametrize("beta", [0.5, 0.75, 1.0])
    def test_flat_mode(self, beta):
        assert phase_integral(0.3, 1.7, 0.0, 1.5, beta) == pytest.approx(1.4 * 1.5 ** (2 * beta), rel=1e-14)

    def test_beta_one_example(self):
        assert phase_integral(0, 1, 1.0, 1.0, 1.0) == pytest.approx(1.0 / 3.0, rel=1e-14)
        assert phase_oracle(0, 1, 1.0, 1.0, 1.0) == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_beta_half_example(self):
        assert phase_integral(0, 1, 1.0, 0.0, 0.5) == pytest.approx(0.5, rel=1e-14)

    def test_rejects_reversed(self):
        with pytest.raises(ValueError):
            phase_integral(1.0, 0.0, 1.0, 1.0, 1.0)

    @pytest.mark.parametrize("beta", [0.5, 0.75])
    def test_endpoint_near_kink(self, beta):
        # one endpoint a hair above the kink at 0: int_s^{1+s} tau^{2b} = 1 / (2b + 1)
        s = 1.6e-193
        got = phase_integral(s, 1.0 + s, 1.0, 0.0, beta)
        assert got == pytest.approx(1.0 / (2 * beta + 1), rel=1e-14)

    @pytest.mark.parametrize("beta", [0.5, 0.75, 1.0])
    def test_quadrature_matches_closed_d1(self, beta):
        rng = np.random.default_rng(0)
        s = rng.uniform(-2, 2, 50)
        t = s + rng.uniform(0, 3, 50)
        phi, xi = rng.standard_normal(50), rng.standard_normal(50)
        a = phase_integral(s, t, phi[:, None], xi[:, None], beta, method="closed")
        b = phase_integral(s, t, phi[:, None], xi[:, None], beta, method="quadrature")
        assert np.allclose(a, b, rtol=1e-12, atol=0)

    @settings(max_examples=60, deadline=None)
    @given(beta=st.sampled_from([0.5, 0.75, 1.0]), s=st.floats(-3, 3), u=st.floats(1e-3, 4),
           p1=st.floats(-3, 3), p2=st.floats(-3, 3), x1=st.floats(-3, 3), x2=st.floats(-3, 3))
    def test_matches_oracle_d2(self, beta, s, u, p1, p2, x1, x2):
        ref = phase_oracle(s, s + u, [p1, p2], [x1, x2], beta)
        got = phase_integral(s, s + u, [p1, p2], [x1, x2], beta)
        assert got == pytest.approx(ref, rel=1e-10, abs=1e-300)

    @settings(max_examples=60, deadline=None)
    @given(beta=st.sampled_from([0.5, 0.75, 1.0]), r=st.floats(-2, 2), s=st.floats(0, 2), t=st.floats(0, 2),
           phi=st.floats(-4, 4), xi=st.floats(-4, 4))
    def test_additive(self, beta, r, s, t, phi, xi):
        s, t = r + s, r + s + t
        whole = phase_integral(r, t, phi, xi, beta)
        parts = phase_integral(r, s, phi, xi, beta) + phase_integral(s, t, phi, xi, beta)
        assert whole == pytest.approx(parts, rel=1e-12, abs=1e-14)


class TestKernel:
    def test_examples(self):
        assert kernel_K(0.4, 0.4, 1.0, 2.0, 0.5).value == 1.0
        assert kernel_K(0, 1, 0.0, 2.0, 0.5).value == pytest.approx(math.exp(-2.0), rel=1e-14)
        assert kernel_K(0, 1, 1.0, 1.0, 1.0).value == pytest.approx(math.exp(-1.0 / 3.0), rel=1e-14)

    def test_bounded_by_one(self):
        rng = np.random.default_rng(1)
        s = rng.uniform(-1, 1, 200)
        k = kernel_values(s, s + rng.uniform(0, 2, 200), rng.standard_normal((200, 2)), rng.standard_normal((200, 2)), 0.75)
        assert np.all((k > 0) & (k <= 1))

    def test_backward_growth(self):
        assert backward_growth(-2.0, 0.0, 1.0, 0.5) == pytest.approx(2.0)


class TestIntegrator:
    def test_zero(self):
        g = grid()
        assert not np.any(apply_T(SpectralField.zeros(g, Frame.GALILEAN), KineticParams(0.5)).values)

    def test_steady_state(self):
        # phi = 0, xi = 1 (L_v = pi), constant h = c: g -> c / |xi|^{2 beta}
        g = grid(t_end=30.0, n_t=300)
        h = np.zeros(g.field_shape, complex)
        h[:, 0, 1] = 2.5
        out = apply_T(SpectralField(h, Frame.GALILEAN, g), KineticParams(0.5)).values[:, 0, 1]
        assert abs(out[-1] - 2.5) < 1e-6
        assert np.allclose(out, heat_mode_duhamel(2.5, 1.0, g.times()), atol=1e-12)

    @pytest.mark.parametrize("beta", [0.5, 1.0])
    def test_adjoint_dense(self, beta):
        g = grid(n_x=4, n_v=4, n_t=12, half_len_v=1.3)
        p = KineticParams(beta)
        c = step_coefficients(g, p)
        om = trapezoid_weights(g.n_t + 1, g.dt)
        rng = np.random.default_rng(2)
        for k, l in [(1, 1), (2, 3), (3, 0)]:
            def run(fn, e):
                h = np.zeros(g.field_shape, complex)
                h[:, k, l] = e
                return fn(SpectralField(h, Frame.GALILEAN, g), p, c).values[:, k, l]

            T = dense_operator(lambda e: run(apply_T, e), g.n_t + 1)
            Ts = dense_operator(lambda e: run(apply_T_star, e), g.n_t + 1)
            # <T a, b>_om = <a, T* b>_om
            assert np.allclose(np.diag(om) @ Ts, (np.diag(om) @ T).conj().T, rtol=1e-12, atol=1e-15)
            a = rng.standard_normal(g.n_t + 1) + 1j * rng.standard_normal(g.n_t + 1)
            b = rng.standard_normal(g.n_t + 1) + 1j * rng.standard_normal(g.n_t + 1)
            lhs = np.vdot(b, om * (T @ a))
            rhs = np.vdot(Ts @ b, om * a)
            assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

    def test_requires_galilean(self):
        with pytest.raises(ValueError):
            apply_T(SpectralField.zeros(grid(), Frame.PHYSICAL), KineticParams(1.0))


def _phi0_source(g, amp=1.0):
    h = np.zeros(g.field_shape, complex)
    t = g.times()
    h[:, 0, 2] = amp * np.sin(3 * t) * np.exp(t)
    return SpectralField(h, Frame.PHYSICAL, g)


class TestSolvers:
    def test_zero_source(self):
        g = grid()
        f = solve_forward(SpectralField.zeros(g, Frame.PHYSICAL), KineticParams(0.5))
        assert not np.any(f.values)

    def test_phi0_matches_scalar_ode(self):
        # phi = 0 mode is the fractional heat Duhamel problem; exponential integrator is second order
        errs = []
        for n_t in (20, 40, 80):
            g = grid(n_t=n_t)
            S = _phi0_source(g)
            f = solve_forward(S, KineticParams(0.75)).values[:, 0, 2]
            rate = 2.0 ** 1.5
            ref = scalar_ode(lambda t: rate, lambda t: np.sin(3 * t) * np.exp(t), g.times(), rtol=1e-12)
            errs.append(np.max(np.abs(f - ref)))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.9)
        assert errs[-1] < 1e-4

    def test_degenerate_source_rejected(self):
        g = grid()
        h = np.zeros(g.field_shape, complex)
        h[:, 1, 0] = 1.0
        with pytest.raises(DegenerateModeError):
            solve_forward(SourceDecomposition(s1=SpectralField(h, Frame.PHYSICAL, g)), KineticParams(0.5))

    def test_backward_is_adjoint(self):
        g = grid(n_t=16)
        S = generate_source(GeneratorSpec("random-band-limited", part="s3", frame="galilean", band=(0.5, 3.0)), g, 3)
        R = generate_source(GeneratorSpec("random-band-limited", part="s3", frame="galilean", band=(0.5, 3.0)), g, 4)
        p = KineticParams(0.5)
        from kinfp.norms import duality_pairing

        a = duality_pairing(solve_forward(S, p, Frame.GALILEAN), R.s3)
        b = duality_pairing(S.s3, solve_backward(R, p, Frame.GALILEAN))
        assert abs(a - b) <= 1e-10 * abs(a)

    def test_norm_chain_rescaling(self):
        # LHS / |S1| stays put under exact kinetic relabeling
        g = grid(n_x=16, n_v=32, half_len_x=3.1, half_len_v=6.7, n_t=40)
        p = KineticParams(0.5)
        S = generate_source(GeneratorSpec("random-band-limited", band=(0.5, 3.0)), g, 9)
        f = solve_forward(S, p, Frame.GALILEAN)

        def chain(f, s1):
            lhs = norm(f, Hdot_v(p.beta), p) + norm(f, Hdot_x(p.s_x), p) + norm(f, L2(TimeMode.SUP), p)
            return lhs / norm(s1, Hdot_v(-p.beta), p)

        base = chain(f, S.s1)
        for delta in (0.5, 2.0):
            S_d = SourceDecomposition(s1=rescale_field(S.s1, delta, p.beta, delta ** (2 * p.beta)))
            f_d = solve_forward(S_d, p, Frame.GALILEAN)
            assert chain(f_d, S_d.s1) == pytest.approx(base, rel=0.05)
            assert np.allclose(f_d.values, f.values, rtol=1e-10, atol=1e-14)


class TestCauchy:
    def test_heat_decay_single_mode(self):
        g = grid()
        psi = np.zeros(g.mode_shape, complex)
        psi[0, 3] = 1.0  # phi = 0, xi = 3
        f = solve_cauchy(psi, None, KineticParams(0.5), g)
        assert np.allclose(f.values[:, 0, 3], np.exp(-3.0 * g.times()), rtol=1e-13)

    def test_norm_nonincreasing(self):
        g = grid(n_v=32, half_len_v=2 * math.pi)
        rng = np.random.default_rng(5)
        psi = rng.standard_normal(g.mode_shape) + 1j * rng.standard_normal(g.mode_shape)
        _, xi = mode_vectors(g)
        psi *= np.abs(xi[..., 0]) < 4
        f = solve_cauchy(psi, None, KineticParams(0.75), g, frame=Frame.GALILEAN)
        sq = np.sum(np.abs(f.values) ** 2, axis=(1, 2))
        assert np.all(np.diff(sq) <= 1e-12 * sq[0])

    def test_zero_initial_matches_forward(self):
        g = grid()
        S = generate_source(GeneratorSpec("random-band-limited", part="s3", band=(0.5, 3.0)), g, 6)
        p = KineticParams(1.0)
        a = solve_cauchy(np.zeros(g.mode_shape), S, p, g)
        b = solve_forward(S, p)
        assert np.allclose(a.values, b.values, rtol=0, atol=1e-10 * np.abs(b.values).max())


class TestSymbol:
    def test_constant_origin_mode(self):
        g = grid()
        c = np.zeros(g.field_shape, complex)
        c[:, 0, 0] = 1.0
        res = apply_symbol(SpectralField(c, Frame.PHYSICAL, g), KineticParams(0.5))
        assert np.max(np.abs(res.values)) < 1e-14

    def test_exact_mode_solution(self):
        # g(t) = exp(-P(0, t)) solves the homogeneous mode equation
        errs = []
        for n_t in (40, 80, 160):
            g = grid(n_t=n_t)
            c = np.zeros(g.field_shape, complex)
            c[:, 1, 2] = np.exp(-phase_integral(0.0, g.times(), 1.0, 2.0, 0.75))
            res = apply_symbol(SpectralField(c, Frame.GALILEAN, g), KineticParams(0.75))
            errs.append(np.max(np.abs(res.values)))
        assert errs[-1] < 1e-3
        assert math.log2(errs[0] / errs[1]) > 1.8

    def test_residual_second_order(self):
        p = KineticParams(0.5)
        errs = []
        for n_t in (32, 64, 128):
            g = grid(n_x=16, n_v=32, half_len_v=2 * math.pi, n_t=n_t)
            S = generate_source(GeneratorSpec("random-band-limited", part="s3", frame="galilean", band=(0.5, 3.0)), g, 2)
            f = solve_forward(S, p, Frame.GALILEAN)
            errs.append(norm(apply_symbol(f, p) - S.s3, L2(), p) / norm(S.s3, L2(), p))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.9)
