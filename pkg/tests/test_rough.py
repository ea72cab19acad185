import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinfp.core import Frame, KineticParams, PhaseGrid, SourceDecomposition, SpectralField
from kinfp.io import GeneratorSpec, generate_field, generate_source
from kinfp.kolmogorov import solve_cauchy
from kinfp.norms import L2, norm
from kinfp.pipelines import random_coefficient
from kinfp.rough import (
    DiffusionForm, EllipticityError, assemble_form, causality_check, fractional_constant, transport_step, weak_solve,
)


def grid(**kw):
    base = dict(n_x=8, n_v=32, half_len_x=math.pi, half_len_v=math.pi, t_start=0.0, t_end=0.5, n_t=20)
    base.update(kw)
    return PhaseGrid(**base)


def packet(g, width=0.8):
    return generate_field(GeneratorSpec("gaussian-packet", frame="physical", width=width, phi=(1.0,),
                                        envelope="constant"), g)


def v_mode(g, k):
    v = g.h_v * np.arange(g.n_v) - g.half_len_v
    return np.broadcast_to(np.exp(1j * k * v), g.mode_shape).copy()


class TestForms:
    def test_scalar_matrix_symbol(self):
        g = grid()
        lam = 1.7
        A = np.full(g.mode_shape, lam)
        op = assemble_form(DiffusionForm.matrix(A, lam, lam), g, 0)
        u = v_mode(g, 3.0)
        expect = lam * 2 * (1 - math.cos(3.0 * g.h_v)) / g.h_v**2
        assert np.allclose(op.apply(u), expect * u, atol=1e-10)

    def test_ellipticity_checked(self):
        g = grid()
        with pytest.raises(EllipticityError):
            assemble_form(DiffusionForm.matrix(np.full(g.mode_shape, 3.0), 1.0, 2.0), g, 0)
        with pytest.raises(ValueError):
            DiffusionForm.matrix(np.ones(g.mode_shape), 2.0, 1.0)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_coercivity(self, seed):
        g = grid(n_x=4, n_v=16)
        rng = np.random.default_rng(seed)
        A = random_coefficient(g, 1.0, 2.0, rng)
        op = assemble_form(DiffusionForm.matrix(A, 1.0, 2.0), g, 3)
        u = rng.standard_normal(g.mode_shape) + 1j * rng.standard_normal(g.mode_shape)
        grad = (np.roll(u, -1, axis=1) - u) / g.h_v
        dv2 = op.cell * np.sum(np.abs(grad) ** 2)
        assert op.energy(u, u).real >= 1.0 * dv2 * (1 - 1e-12)

    def test_matrix_d2(self):
        g = grid(dim=2, n_x=4, n_v=8)
        A = random_coefficient(g, 1.0, 2.0, np.random.default_rng(1))
        op = assemble_form(DiffusionForm.matrix(A, 1.0, 2.0), g, 0)
        u = np.random.default_rng(2).standard_normal(g.mode_shape)
        assert op.energy(u, u).real > 0

    def test_fractional_multiplier(self):
        g = grid()
        op = assemble_form(DiffusionForm.fractional(0.75), g, 0)
        u = v_mode(g, 2.0)
        assert np.allclose(op.apply(u), 2.0**1.5 * u, atol=1e-12)

    @pytest.mark.parametrize("beta", [0.5, 0.75])
    def test_integral_kernel_refines_to_symbol(self, beta):
        c = fractional_constant(1, beta)
        errs = []
        for n_v in (16, 32, 64, 128):
            g = grid(n_x=2, n_v=n_v)
            form = DiffusionForm.integral_kernel(lambda t, x, v, w: np.full(np.broadcast_shapes(
                np.shape(x), np.shape(v), np.shape(w)), c), beta, c, c)
            op = assemble_form(form, g, 0)
            u = v_mode(g, 1.0)
            errs.append(np.max(np.abs(op.apply(u) - u)))
        assert all(a > b for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 0.05

    def test_integral_kernel_symmetry_check(self):
        g = grid(n_x=2, n_v=8)
        form = DiffusionForm.integral_kernel(lambda t, x, v, w: 1.0 + 0.5 * np.tanh(v) + 0 * w, 0.5, 0.5, 2.0)
        with pytest.raises(EllipticityError):
            assemble_form(form, g, 0)


class TestTransport:
    def test_exact_shift(self):
        g = grid(n_x=16, n_v=8)
        x = g.h_x * np.arange(g.n_x) - g.half_len_x
        v = g.h_v * np.arange(g.n_v) - g.half_len_v
        u = np.exp(1j * 2 * x)[:, None] * np.ones_like(v)[None, :]
        out = transport_step(u, g, 0.3)
        assert np.allclose(out, np.exp(1j * 2 * (x[:, None] - 0.3 * v[None, :])), atol=1e-12)


class TestSolver:
    def test_zero_data_zero_solution(self):
        g = grid()
        A = random_coefficient(g, 1.0, 2.0, np.random.default_rng(0))
        f, ledger = weak_solve(DiffusionForm.matrix(A, 1.0, 2.0), None, None, g)
        assert not np.any(f.values)
        assert not np.any(ledger.norm_sq)

    def test_decay_and_dissipation_budget(self):
        g = grid()
        A = random_coefficient(g, 1.0, 2.0, np.random.default_rng(1))
        psi = packet(g)
        f, ledger = weak_solve(DiffusionForm.matrix(A, 1.0, 2.0), None, psi, g)
        assert np.all(np.diff(ledger.norm_sq) < 0)
        assert 2 * ledger.dissipation.sum() <= ledger.norm_sq[0]

    @pytest.mark.parametrize("kind", ["matrix", "fractional", "integral"])
    def test_energy_ledger(self, kind):
        g = grid()
        rng = np.random.default_rng(2)
        if kind == "matrix":
            form = DiffusionForm.matrix(random_coefficient(g, 1.0, 2.0, rng), 1.0, 2.0)
        elif kind == "fractional":
            form = DiffusionForm.fractional(0.5)
        else:
            form = DiffusionForm.integral_kernel(lambda t, x, v, w: 1.5 + 0.5 * np.cos(x) * np.cos(v) * np.cos(w),
                                                 0.5, 1.0, 2.0)
        S = generate_source(GeneratorSpec("random-band-limited", part="s3", frame="physical", band=(0.5, 5.0)), g, 3)
        _, ledger = weak_solve(form, S, packet(g), g)
        assert ledger.relative_residuals.max() < 1e-10

    def test_strang_energy_ledger(self):
        g = grid()
        form = DiffusionForm.fractional(0.75)
        _, ledger = weak_solve(form, None, packet(g), g, splitting="strang")
        assert ledger.relative_residuals.max() < 1e-10

    def test_cross_check_first_order(self):
        # beta = 1 avoids the slow tail decay of fractional heat kernels on the periodic box
        p = KineticParams(1.0)
        errs = []
        for n_t in (25, 50, 100):
            g = PhaseGrid(16, 64, math.pi, 8.0, 0.0, 0.5, n_t)
            psi = generate_field(GeneratorSpec("gaussian-packet", frame="physical", width=1.0, phi=(1.0, 2.0),
                                               envelope="constant"), g)
            f, _ = weak_solve(DiffusionForm.fractional(1.0), None, psi, g)
            ref = solve_cauchy(psi, None, p)
            errs.append(norm(f - ref, L2(), p) / norm(ref, L2(), p))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders >= 0.9)


class TestCausality:
    def _source(self, g, t0):
        return generate_source(GeneratorSpec("random-band-limited", part="s3", frame="physical", band=(0.5, 5.0),
                                             t_on=t0), g, 4)

    def test_pre_support_zero(self):
        g = grid()
        A = random_coefficient(g, 1.0, 2.0, np.random.default_rng(5))
        rep = causality_check(DiffusionForm.matrix(A, 1.0, 2.0), self._source(g, 0.2), g, 0.2)
        assert rep.passed and rep.checked_slices == 8 and rep.max_pre_norm < 1e-12

    def test_vacuous_at_start(self):
        g = grid()
        rep = causality_check(DiffusionForm.fractional(0.5), self._source(g, 0.0), g, 0.0)
        assert rep.passed and rep.checked_slices == 0

    def test_rejects_early_source(self):
        g = grid()
        with pytest.raises(ValueError):
            causality_check(DiffusionForm.fractional(0.5), self._source(g, 0.0), g, 0.3)

    def test_time_shift(self):
        # time-independent coefficients: a lattice shift of the source shifts the solution
        g = grid()
        A = 1.0 + 0.5 * np.random.default_rng(6).random(g.mode_shape)
        form = DiffusionForm.matrix(A, 1.0, 1.5)
        # bump envelope: S vanishes at t_start, where the implicit step never samples it
        S = generate_source(GeneratorSpec("random-band-limited", part="s3", frame="physical", band=(0.5, 5.0)), g, 7)
        k = 5
        vals = np.zeros_like(S.s3.values)
        vals[k:] = S.s3.values[:-k]
        shifted = SourceDecomposition(s3=SpectralField(vals, Frame.PHYSICAL, g))
        f, _ = weak_solve(form, S, None, g)
        fs, _ = weak_solve(form, shifted, None, g)
        assert np.allclose(fs.values[k:], f.values[:-k], rtol=0, atol=1e-10 * np.abs(f.values).max())
        assert np.max(np.abs(fs.values[:k])) < 1e-14
