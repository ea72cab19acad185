"""Weak solutions with rough diffusion: exact transport + implicit-Euler diffusion.

Each step of size dt does

    f~ = f^n(x - dt v, v)                      (exact, unit-modulus multiplier in phi)
    (I + dt A_h) f^{n+1} = f~ + dt S^{n+1}     (batched conjugate gradients per x-point)

and records the discrete energy identity

    |f^{n+1}|^2 - |f^n|^2 + 2 dt Re a(f^{n+1}, f^{n+1}) - 2 dt Re <S^{n+1}, f^{n+1}> = -|f^{n+1} - f~|^2.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import zeta

from .core import (
    Frame,
    PhaseGrid,
    SourceDecomposition,
    SpectralField,
    coeffs_to_samples,
    make_lattices,
    mode_vectors,
    position_points,
    samples_to_coeffs,
    slice_to_frame,
    to_frame,
    velocity_points,
)


class EllipticityError(ValueError):
    pass


class LinearSolverError(RuntimeError):
    pass


class FormKind(enum.Enum):
    MATRIX = "matrix"
    FRACTIONAL = "fractional"
    INTEGRAL = "integral"


def fractional_constant(d: int, beta: float) -> float:
    """c_{d,b} with (-Delta)^b u(v) = c_{d,b} PV int (u(v) - u(v')) |v - v'|^{-d-2b} dv'."""
    if not 0 < beta < 1:
        raise ValueError("the integral representation needs 0 < beta < 1")
    return 4.0**beta * gamma_fn(0.5 * d + beta) / (math.pi ** (0.5 * d) * abs(gamma_fn(-beta)))


@dataclass(frozen=True)
class DiffusionForm:
    """Diffusion operator of a weak formulation.

    ``coefficient`` (matrix kind) is an array of samples with trailing ``(d, d)``
    axes, optionally with a leading axis over time steps, or a callable
    ``A(t, grid) -> array``.  ``kernel`` (integral kind, d = 1) is the modulation
    ``m(t, x, v, v')`` of ``k = m |v - v'|^{-1-2 beta}``; it must accept
    broadcast arrays.  ``c_shift`` adds ``c I`` (exponential change of unknown).
    """

    kind: FormKind
    lam: float = 1.0
    big_lambda: float = 1.0
    coefficient: object = None
    beta: float | None = None
    kernel: Callable | None = None
    c_shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FormKind(self.kind))
        if not 0 < self.lam <= self.big_lambda < math.inf:
            raise ValueError("need 0 < lam <= big_lambda < inf")
        if self.kind is FormKind.MATRIX and self.coefficient is None:
            raise ValueError("matrix form needs a coefficient field")
        if self.kind in (FormKind.FRACTIONAL, FormKind.INTEGRAL) and not (self.beta and self.beta > 0):
            raise ValueError("fractional and integral forms need beta > 0")
        if self.kind is FormKind.INTEGRAL and self.kernel is None:
            raise ValueError("integral form needs a kernel modulation")
        if self.c_shift < 0:
            raise ValueError("c_shift must be non-negative")

    @classmethod
    def matrix(cls, A, lam: float, big_lambda: float, c_shift: float = 0.0) -> "DiffusionForm":
        return cls(FormKind.MATRIX, lam, big_lambda, coefficient=A, c_shift=c_shift)

    @classmethod
    def fractional(cls, beta: float, lam: float = 1.0, big_lambda: float = 1.0, c_shift: float = 0.0):
        return cls(FormKind.FRACTIONAL, lam, big_lambda, beta=beta, c_shift=c_shift)

    @classmethod
    def integral_kernel(cls, modulation: Callable, beta: float, lam: float, big_lambda: float,
                        c_shift: float = 0.0) -> "DiffusionForm":
        return cls(FormKind.INTEGRAL, lam, big_lambda, beta=beta, kernel=modulation, c_shift=c_shift)


# ---------------------------------------------------------------------------
# assembly


def _coefficient_samples(form: DiffusionForm, grid: PhaseGrid, step: int, t: float) -> np.ndarray:
    d = grid.dim
    space = grid.mode_shape
    A = form.coefficient
    A = A(t, grid) if callable(A) else np.asarray(A, dtype=float)
    if A.shape == space and d == 1:
        A = A[..., None, None]
    if A.shape == (grid.n_t,) + space + (d, d):
        A = A[step]
    elif A.shape == (grid.n_t,) + space and d == 1:
        A = A[step][..., None, None]
    if A.shape != space + (d, d):
        raise ValueError(f"coefficient samples have shape {A.shape}, expected {space + (d, d)}")
    return A


def check_matrix_ellipticity(A: np.ndarray, lam: float, big_lambda: float, tol: float = 1e-12):
    if not np.allclose(A, np.swapaxes(A, -1, -2), rtol=0, atol=tol * big_lambda):
        raise EllipticityError("coefficient matrix is not symmetric")
    ev = np.linalg.eigvalsh(A)
    if ev.min() < lam * (1 - tol) or ev.max() > big_lambda * (1 + tol):
        raise EllipticityError(
            f"eigenvalues in [{ev.min():.6g}, {ev.max():.6g}] leave [{lam:g}, {big_lambda:g}]"
        )


def cell_kernel_weights(n: int, h: float, half_len: float, beta: float) -> np.ndarray:
    """Periodized cell integrals of |z|^{-1-2b} for offsets j h (j in FFT order, j = 0 dropped)."""
    s = 1.0 + 2.0 * beta
    j = np.fft.fftfreq(n, 1.0 / n)
    out = np.zeros(n)
    period = 2.0 * half_len

    def cell(z):
        a = np.abs(z) - 0.5 * h
        b = np.abs(z) + 0.5 * h
        return (a ** (-2.0 * beta) - b ** (-2.0 * beta)) / (2.0 * beta)

    for p in range(-2, 3):
        z = j * h + p * period
        mask = np.ones(n, dtype=bool) if p else (j != 0)
        out[mask] += cell(z[mask])
    q = j * h / period
    # far images by the midpoint rule, summed in closed form
    out += h * period**-s * (zeta(s, 3.0 + q) + zeta(s, 3.0 - q))
    out[0] = 0.0
    return out


@dataclass
class AssembledForm:
    """Discrete diffusion operator for one time step, acting on (x, v) sample arrays."""

    form: DiffusionForm
    grid: PhaseGrid
    apply: Callable[[np.ndarray], np.ndarray]
    multiplier: np.ndarray | None = None  # v-Fourier symbol when the operator is diagonal

    @property
    def cell(self) -> float:
        g = self.grid
        return (g.h_x * g.h_v) ** g.dim

    def energy(self, f: np.ndarray, g: np.ndarray) -> complex:
        """a_h(f, g) = sum over cells of (A_h f) conj(g)."""
        return complex(self.cell * np.sum(self.apply(f) * np.conj(g)))

    def apply_at(self, u_v: np.ndarray, x_index: tuple) -> np.ndarray:
        """Operator at a single x-point (``u_v`` has the v-shape)."""
        full = np.zeros(self.grid.mode_shape, dtype=np.complex128)
        full[x_index] = u_v
        return self.apply(full)[x_index]


def assemble_form(form: DiffusionForm, grid: PhaseGrid, step: int, check: bool = True) -> AssembledForm:
    d = grid.dim
    h = grid.h_v
    t_mid = grid.t_start + (step + 0.5) * grid.dt
    v_axes = grid.v_axes
    c = form.c_shift

    if form.kind is FormKind.MATRIX:
        A = _coefficient_samples(form, grid, step, t_mid)
        if check:
            check_matrix_ellipticity(A, form.lam, form.big_lambda)

        def apply(u):
            grads = [(np.roll(u, -1, axis=ax) - u) / h for ax in v_axes]
            out = c * u
            for i, ax in enumerate(v_axes):
                flux = sum(A[..., i, j] * grads[j] for j in range(d))
                out = out + (np.roll(flux, 1, axis=ax) - flux) / h
            return out

        return AssembledForm(form, grid, apply)

    if form.kind is FormKind.FRACTIONAL:
        _, xi = mode_vectors(grid)
        sym = np.sum(xi * xi, axis=-1) ** form.beta + c

        def apply(u):
            return coeffs_to_samples(sym * samples_to_coeffs(u, v_axes), v_axes)

        return AssembledForm(form, grid, apply, multiplier=sym)

    # integral kernel, d = 1
    if d != 1:
        raise NotImplementedError("the integral-kernel form is implemented for d = 1")
    beta = form.beta
    if not 0 < beta < 1:
        raise ValueError("integral kernels need 0 < beta < 1")
    n = grid.n_v
    x = position_points(grid)
    v = velocity_points(grid)
    m = np.asarray(form.kernel(t_mid, x[:, None, None], v[None, :, None], v[None, None, :]), dtype=float)
    m = np.broadcast_to(m, (grid.n_x, n, n))
    if check:
        if not np.allclose(m, np.swapaxes(m, 1, 2), rtol=1e-13, atol=0):
            raise EllipticityError("kernel is not symmetric in (v, v')")
        if m.min() < form.lam * (1 - 1e-12) or m.max() > form.big_lambda * (1 + 1e-12):
            raise EllipticityError(f"kernel modulation in [{m.min():.6g}, {m.max():.6g}] leaves [lam, Lambda]")
    kc = cell_kernel_weights(n, h, grid.half_len_v, beta)
    off = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    kappa = m * kc[off][None]
    # short-range correction from the excluded cell: -(h/2)^{2-2b}/(2-2b) * m * u''
    ch = (0.5 * h) ** (2.0 - 2.0 * beta) / (2.0 - 2.0 * beta) / h**2
    diag_m = np.diagonal(m, axis1=1, axis2=2)
    nb = np.arange(n)
    right = (nb + 1) % n
    mu = 0.5 * ch * (diag_m + diag_m[:, right])
    kappa = kappa.copy()
    kappa[:, nb, right] += mu
    kappa[:, right, nb] += mu
    kappa[:, nb, nb] = 0.0
    Lmat = np.einsum("xij->xi", kappa)[:, :, None] * np.eye(n)[None] - kappa + c * np.eye(n)[None]

    def apply(u):
        return np.einsum("xij,xj->xi", Lmat, u)

    return AssembledForm(form, grid, apply)


# ---------------------------------------------------------------------------
# linear solve


def batched_cg(op: Callable, b: np.ndarray, x0: np.ndarray, axes: tuple, rtol: float = 1e-12,
               max_iter: int = 5000) -> np.ndarray:
    """Conjugate gradients run independently on every block (reductions over ``axes``)."""

    def dot(p, q):
        return np.sum(np.conj(p) * q, axis=axes, keepdims=True).real

    x = x0.copy()
    r = b - op(x)
    p = r.copy()
    rr = dot(r, r)
    target = (rtol**2) * np.maximum(dot(b, b), 1e-300)
    for _ in range(max_iter):
        if np.all(rr <= target):
            return x
        Ap = op(p)
        pAp = dot(p, Ap)
        active = rr > target
        alpha = np.where(active, rr / np.where(pAp > 0, pAp, 1.0), 0.0)
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = dot(r, r)
        beta = np.where(active, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        p = r + beta * p
        rr = rr_new
    if np.all(rr <= target):
        return x
    raise LinearSolverError(f"CG stagnated: worst relative residual {math.sqrt(float(np.max(rr / target))) * rtol:.3e}")


# ---------------------------------------------------------------------------
# energy ledger


LEDGER_COLUMNS = (
    "step", "t", "norm_sq_before", "norm_sq_after", "dissipation", "work_s1", "work_s2", "work_s3",
    "defect", "transport_drift", "residual", "relative_residual",
)


@dataclass
class EnergyLedger:
    """Per-step energy balance; ``dissipation`` and ``work_*`` already carry the factor dt."""

    times: np.ndarray
    norm_sq: np.ndarray  # n_t + 1 entries
    dissipation: np.ndarray
    work_s1: np.ndarray
    work_s2: np.ndarray
    work_s3: np.ndarray
    defect: np.ndarray
    transport_drift: np.ndarray

    @property
    def work(self) -> np.ndarray:
        return self.work_s1 + self.work_s2 + self.work_s3

    @property
    def residuals(self) -> np.ndarray:
        return (self.norm_sq[1:] - self.norm_sq[:-1] + 2 * self.dissipation - 2 * self.work + self.defect)

    @property
    def scales(self) -> np.ndarray:
        terms = np.stack([self.norm_sq[1:], self.norm_sq[:-1], 2 * np.abs(self.dissipation),
                          2 * np.abs(self.work), self.defect])
        return terms.max(axis=0)

    @property
    def relative_residuals(self) -> np.ndarray:
        s = self.scales
        return np.where(s > 0, np.abs(self.residuals) / np.where(s > 0, s, 1.0), 0.0)

    def rows(self):
        res = self.residuals
        rel = self.relative_residuals
        for n in range(len(self.dissipation)):
            yield {
                "step": str(n),
                "t": repr(float(self.times[n + 1])),
                "norm_sq_before": repr(float(self.norm_sq[n])),
                "norm_sq_after": repr(float(self.norm_sq[n + 1])),
                "dissipation": repr(float(self.dissipation[n])),
                "work_s1": repr(float(self.work_s1[n])),
                "work_s2": repr(float(self.work_s2[n])),
                "work_s3": repr(float(self.work_s3[n])),
                "defect": repr(float(self.defect[n])),
                "transport_drift": repr(float(self.transport_drift[n])),
                "residual": repr(float(res[n])),
                "relative_residual": repr(float(rel[n])),
            }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=LEDGER_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows())
        return buf.getvalue()


# ---------------------------------------------------------------------------
# solver


def _source_samples(S: SourceDecomposition | None, grid: PhaseGrid) -> dict[str, np.ndarray]:
    if S is None:
        return {}
    if S.grid != grid:
        raise ValueError("source lives on a different grid")
    axes = tuple(a + 1 for a in grid.x_axes + grid.v_axes)
    return {k: coeffs_to_samples(to_frame(p, Frame.PHYSICAL).values, axes) for k, p in S.present()}


def _initial_samples(psi, grid: PhaseGrid, psi_frame: Frame) -> np.ndarray:
    if psi is None:
        return np.zeros(grid.mode_shape, dtype=np.complex128)
    if isinstance(psi, SpectralField):
        psi_frame = psi.frame
        psi = psi.values[0]
    c = slice_to_frame(np.asarray(psi, dtype=np.complex128), grid, grid.t_start, psi_frame, Frame.PHYSICAL)
    return coeffs_to_samples(c, grid.x_axes + grid.v_axes)


def transport_step(u: np.ndarray, grid: PhaseGrid, tau: float) -> np.ndarray:
    """Exact free transport over time ``tau``: f(x, v) -> f(x - tau v, v)."""
    phi1, _, _ = make_lattices(grid)
    v = velocity_points(grid)
    d = grid.dim
    phase = np.zeros(grid.mode_shape)
    for j in range(d):
        sp = [1] * (2 * d)
        sp[j] = grid.n_x
        sv = [1] * (2 * d)
        sv[d + j] = grid.n_v
        phase = phase + phi1.reshape(sp) * v.reshape(sv)
    U = np.fft.fftn(u, axes=grid.x_axes)
    return np.fft.ifftn(U * np.exp(-1j * tau * phase), axes=grid.x_axes)


def weak_solve(form: DiffusionForm, S: SourceDecomposition | None, psi, grid: PhaseGrid, *,
               psi_frame: Frame = Frame.PHYSICAL, cg_rtol: float = 1e-12, splitting: str = "lie",
               ) -> tuple[SpectralField, EnergyLedger]:
    """March from ``t_start``; returns the physical-frame field and the energy ledger.

    With ``splitting="strang"`` transport is split in two half steps around the
    diffusion solve; the ledger then refers to the post-diffusion state, whose
    norm the second (isometric) half step preserves.
    """
    if splitting not in ("lie", "strang"):
        raise ValueError("splitting must be 'lie' or 'strang'")
    N = grid.n_t
    dt = grid.dt
    cell = (grid.h_x * grid.h_v) ** grid.dim
    src = _source_samples(S, grid)
    u = _initial_samples(psi, grid, psi_frame)

    out = np.empty(grid.field_shape, dtype=np.complex128)
    out[0] = u
    norm_sq = np.empty(N + 1)
    norm_sq[0] = cell * np.sum(np.abs(u) ** 2)
    diss = np.zeros(N)
    works = {k: np.zeros(N) for k in ("s1", "s2", "s3")}
    defect = np.zeros(N)
    drift = np.zeros(N)

    for n in range(N):
        form_n = assemble_form(form, grid, n)
        tau = dt if splitting == "lie" else 0.5 * dt
        ut = transport_step(u, grid, tau)
        drift[n] = cell * np.sum(np.abs(ut) ** 2) - norm_sq[n]
        rhs = ut.copy()
        s_now = {k: a[n + 1] for k, a in src.items()}
        for a in s_now.values():
            rhs += dt * a
        if form_n.multiplier is not None:
            c = samples_to_coeffs(rhs, grid.v_axes) / (1.0 + dt * form_n.multiplier)
            new = coeffs_to_samples(c, grid.v_axes)
        elif not np.any(rhs):
            new = np.zeros_like(rhs)
        else:
            new = batched_cg(lambda w: w + dt * form_n.apply(w), rhs, ut, grid.v_axes, rtol=cg_rtol)
        diss[n] = dt * form_n.energy(new, new).real
        for k, a in s_now.items():
            works[k][n] = dt * cell * np.sum(a * np.conj(new)).real
        defect[n] = cell * np.sum(np.abs(new - ut) ** 2)
        norm_sq[n + 1] = cell * np.sum(np.abs(new) ** 2)
        u = transport_step(new, grid, 0.5 * dt) if splitting == "strang" else new
        out[n + 1] = u

    axes = tuple(a + 1 for a in grid.x_axes + grid.v_axes)
    field_ = SpectralField(samples_to_coeffs(out, axes), Frame.PHYSICAL, grid)
    ledger = EnergyLedger(grid.times(), norm_sq, diss, works["s1"], works["s2"], works["s3"], defect, drift)
    return field_, ledger


@dataclass(frozen=True)
class CausalityReport:
    t0: float
    max_pre_norm: float
    checked_slices: int
    tolerance: float = 1e-12

    @property
    def passed(self) -> bool:
        return self.max_pre_norm < self.tolerance


def causality_check(form: DiffusionForm, S: SourceDecomposition, grid: PhaseGrid, t0: float,
                    tolerance: float = 1e-12) -> CausalityReport:
    """Solve from rest and measure the solution on lattice times before ``t0``."""
    times = grid.times()
    before = times < t0
    for _, part in S.present():
        if np.any(part.values[before] != 0):
            raise ValueError("source is not supported in t >= t0")
    f, _ = weak_solve(form, S, None, grid)
    axes = tuple(range(1, f.values.ndim))
    norms = np.sqrt(grid.volume * np.sum(np.abs(f.values) ** 2, axis=axes))
    pre = norms[before]
    return CausalityReport(t0, float(pre.max()) if pre.size else 0.0, int(pre.size), tolerance)


__all__ = [
    "DiffusionForm", "FormKind", "AssembledForm", "assemble_form", "EnergyLedger", "weak_solve",
    "causality_check", "CausalityReport", "fractional_constant", "cell_kernel_weights", "batched_cg",
    "transport_step", "EllipticityError", "LinearSolverError",
]
