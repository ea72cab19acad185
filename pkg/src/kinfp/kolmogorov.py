"""Per-mode solution machinery for the constant-coefficient fractional Kolmogorov equation.

In the Galilean frame every mode (phi, xi) obeys the scalar ODE

    g'(t) + |xi - t phi|^{2 beta} g(t) = h(t)

whose propagator is ``K(t, s) = exp(-P(s, t))`` with the phase ``P`` below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .core import (
    Frame,
    KineticParams,
    SourceDecomposition,
    SpectralField,
    effective_xi,
    mode_vectors,
    slice_to_frame,
    to_frame,
)
from .norms import DEGENERATE_TOL, DegenerateModeError, Hdot_v, Hdot_x, degenerate_mass

_GL_X, _GL_W = leggauss(15)
_MAX_ROUNDS = 90


def _as_vectors(phi, xi):
    phi = np.asarray(phi, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if phi.ndim == 0:
        phi = phi[None]
    if xi.ndim == 0:
        xi = xi[None]
    return phi, xi


def _power_diff(a, b, p, u=None):
    """Accurate ``G(a) - G(b)`` for ``G(z) = sign(z)|z|^p / p`` and ``a >= b``.

    ``u`` is the exact width ``a - b`` when the caller knows it more precisely
    than the difference of the rounded endpoints.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    u = a - b if u is None else np.broadcast_to(np.asarray(u, float), a.shape)
    out = np.empty(a.shape)
    split = (a > 0) & (b < 0)
    out[split] = (a[split] ** p + (-b[split]) ** p) / p
    same = ~split
    # on one side of zero: hi^p - lo^p with |hi| - |lo| = u
    lo = np.minimum(np.abs(a[same]), np.abs(b[same]))
    us = u[same]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        rel = np.where(lo > 0, us / np.where(lo > 0, lo, 1.0), np.inf)
        # expm1 form only where the width is small against lo; otherwise nothing cancels
        narrow = lo**p * np.expm1(p * np.log1p(np.minimum(rel, 1.0)))
        val = np.where(rel <= 1.0, narrow, (lo + us) ** p - lo**p)
    out[same] = val / p
    return out


def _quad_even(lo, width, dd, beta, rtol):
    """Integral of ``(y^2 + dd)^beta`` over ``[lo, lo + width]`` (lo >= 0), adaptive Gauss-Legendre.

    Intervals are carried as (start, width) so that narrow intervals far from
    the origin keep their width to full relative precision.
    """
    lo = np.asarray(lo, float).ravel()
    width = np.asarray(width, float).ravel()
    dd = np.asarray(dd, float).ravel()
    n = lo.size
    result = np.zeros(n)

    def gl(a, w, d2):
        r = 0.5 * w
        y = (a + r)[:, None] + r[:, None] * _GL_X[None, :]
        vals = (y * y + d2[:, None]) ** beta
        return r * (vals @ _GL_W)

    scale = np.abs(gl(lo, width, dd))
    # grade toward the origin, where the integrand is least smooth
    idx = np.arange(n)
    qa, qw = lo.copy(), width.copy()
    qi = idx
    for _ in range(_MAX_ROUNDS):
        if qi.size == 0:
            break
        h = 0.5 * qw
        whole = gl(qa, qw, dd[qi])
        left = gl(qa, h, dd[qi])
        right = gl(qa + h, h, dd[qi])
        halves = left + right
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(width[qi] > 0, qw / np.where(width[qi] > 0, width[qi], 1.0), 1.0)
        tol = rtol * scale[qi] * share
        ok = (np.abs(halves - whole) <= tol) | (qw <= 4 * np.finfo(float).eps * np.maximum(qa + qw, 1e-300))
        np.add.at(result, qi[ok], halves[ok])
        keep = ~ok
        qi = np.concatenate([qi[keep], qi[keep]])
        qa = np.concatenate([qa[keep], qa[keep] + h[keep]])
        qw = np.concatenate([h[keep], h[keep]])
    else:
        if qi.size:
            np.add.at(result, qi, gl(qa, qw, dd[qi]))
    return result


def phase_integral(s, t, phi, xi, beta: float, method: str = "auto", rtol: float = 1e-13) -> np.ndarray:
    """``P = int_s^t |xi - tau phi|^{2 beta} d tau`` (vectorized).

    ``phi``/``xi`` hold the vector index on the last axis (0-d means d = 1);
    ``s`` and ``t`` broadcast against the leading axes.  ``method`` is one of
    ``auto`` (closed form when beta = 1 or d = 1), ``closed`` or ``quadrature``.
    """
    phi, xi = _as_vectors(phi, xi)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s > t):
        raise ValueError("phase_integral needs s <= t")
    d = phi.shape[-1]
    lead = np.broadcast_shapes(s.shape, t.shape, phi.shape[:-1], xi.shape[:-1])
    s = np.broadcast_to(s, lead)
    t = np.broadcast_to(t, lead)
    phi = np.broadcast_to(phi, lead + (d,))
    xi = np.broadcast_to(xi, lead + (d,))

    pp = np.sum(phi * phi, axis=-1)
    u = t - s
    out = np.empty(lead)
    flat = pp == 0
    if np.any(flat):
        out[flat] = u[flat] * np.sum(xi[flat] ** 2, axis=-1) ** beta
    live = ~flat
    if not np.any(live):
        return out if lead else float(out)
    ph, x, pl = phi[live], xi[live], pp[live]
    # y = |phi| tau - xi.phi_hat runs over [yb, ya] of exact width |phi| u; the
    # distance of the line from the origin is carried separately as dd
    nphi = np.sqrt(pl)
    x_par = np.sum(x * ph, axis=-1) / nphi
    dd = np.sum((x - (x_par / nphi)[:, None] * ph) ** 2, axis=-1)
    ul = u[live]
    ya = nphi * t[live] - x_par
    yb = nphi * s[live] - x_par
    width = nphi * ul

    if method == "auto":
        method = "closed" if (beta == 1.0 or d == 1) else "quadrature"
    if method == "closed":
        if beta == 1.0:
            val = ul * ((ya * ya + ya * yb + yb * yb) / 3.0 + (0.0 if d == 1 else dd))
        elif d == 1:
            val = _power_diff(ya, yb, 2.0 * beta + 1.0, width) / nphi
        else:
            raise ValueError("closed form exists only for beta = 1 or d = 1")
    elif method == "quadrature":
        if d == 1:
            dd = np.zeros_like(dd)
        # the integrand is even in y; fold onto [0, inf)
        cross = (yb < 0) & (ya > 0)
        lo1 = np.where(cross, 0.0, np.minimum(np.abs(ya), np.abs(yb)))
        w1 = np.where(cross, ya, width)
        w2 = np.where(cross, -yb, 0.0)
        val = (_quad_even(lo1, w1, dd, beta, rtol) + _quad_even(np.zeros_like(w2), w2, dd, beta, rtol)) / nphi
    else:
        raise ValueError(f"unknown method {method!r}")
    out[live] = val
    return out if lead else float(out)


@dataclass(frozen=True)
class KernelEvaluation:
    t: float
    s: float
    phi: np.ndarray
    xi: np.ndarray
    value: float
    phase: float


def kernel_K(s: float, t: float, phi, xi, beta: float, method: str = "auto") -> KernelEvaluation:
    ph = phase_integral(s, t, phi, xi, beta, method=method)
    return KernelEvaluation(
        t=float(t), s=float(s), phi=np.atleast_1d(np.asarray(phi, float)),
        xi=np.atleast_1d(np.asarray(xi, float)), value=math.exp(-ph), phase=float(ph),
    )


def kernel_values(s, t, phi, xi, beta: float, method: str = "auto") -> np.ndarray:
    return np.exp(-phase_integral(s, t, phi, xi, beta, method=method))


def backward_growth(t, phi, xi, beta: float) -> np.ndarray:
    """``-log K(0, t)`` for ``t <= 0``: the exponent by which ``K(0, t)^{-1}`` grows."""
    return phase_integral(t, np.zeros_like(np.asarray(t, float)), phi, xi, beta)


# ---------------------------------------------------------------------------
# exponential integrator


def _phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """phi1(z) = (1 - e^{-z})/z and phi2(z) = (z - 1 + e^{-z})/z^2, stable for small z."""
    z = np.asarray(z, float)
    small = z < 0.5
    p1 = np.empty_like(z)
    p2 = np.empty_like(z)
    zs = z[small]
    t1 = np.zeros_like(zs)
    t2 = np.zeros_like(zs)
    term1 = np.ones_like(zs)  # (-z)^k / (k+1)!
    term2 = np.full_like(zs, 0.5)  # (-z)^k / (k+2)!
    for k in range(25):
        t1 += term1
        t2 += term2
        term1 = term1 * (-zs) / (k + 2)
        term2 = term2 * (-zs) / (k + 3)
    p1[small] = t1
    p2[small] = t2
    zb = z[~small]
    e = np.exp(-zb)
    p1[~small] = (1.0 - e) / zb
    p2[~small] = (zb - 1.0 + e) / (zb * zb)
    return p1, p2


@dataclass(frozen=True)
class StepCoefficients:
    """One-step factors: ``g_{n+1} = E_n g_n + w0_n h_n + w1_n h_{n+1}``."""

    E: np.ndarray
    w0: np.ndarray
    w1: np.ndarray


def step_coefficients(grid, params: KineticParams) -> StepCoefficients:
    phi, xi = mode_vectors(grid)
    t = grid.times()
    tt = t.reshape((-1,) + (1,) * (2 * grid.dim))
    z = phase_integral(tt[:-1], tt[1:], phi[None], xi[None], params.beta)
    p1, p2 = _phi_functions(z)
    dt = grid.dt
    w1 = dt * p2
    return StepCoefficients(np.exp(-z), dt * p1 - w1, w1)


def _require_galilean(h: SpectralField):
    if h.frame is not Frame.GALILEAN:
        raise ValueError("Kolmogorov operators act on Galilean-frame fields")


def _forward(h: np.ndarray, c: StepCoefficients, g0=None) -> np.ndarray:
    g = np.empty_like(h)
    g[0] = 0.0 if g0 is None else g0
    for n in range(h.shape[0] - 1):
        g[n + 1] = c.E[n] * g[n] + c.w0[n] * h[n] + c.w1[n] * h[n + 1]
    return g


def apply_T(h: SpectralField, params: KineticParams, coeffs: StepCoefficients | None = None) -> SpectralField:
    """Causal Duhamel operator on the t-lattice, with ``g(t_start) = 0``."""
    _require_galilean(h)
    c = coeffs or step_coefficients(h.grid, params)
    return h.with_values(_forward(h.values, c))


def apply_T_star(h: SpectralField, params: KineticParams, coeffs: StepCoefficients | None = None) -> SpectralField:
    """Adjoint of :func:`apply_T` for the trapezoid-weighted ``L^2_t`` product.

    The last slice equals ``w1 * h(t_end)``, which is O(dt) rather than zero.
    """
    _require_galilean(h)
    c = coeffs or step_coefficients(h.grid, params)
    N = h.values.shape[0] - 1
    om = np.full(N + 1, h.grid.dt)
    om[0] = om[-1] = h.grid.dt / 2.0
    shape = (-1,) + (1,) * (h.values.ndim - 1)
    x = h.values * om.reshape(shape)
    lam = np.empty_like(x)
    lam[N] = x[N]
    for m in range(N - 1, 0, -1):
        lam[m] = x[m] + c.E[m] * lam[m + 1]
    out = np.zeros_like(x)
    out[:N] += c.w0 * lam[1:]
    out[1:] += c.w1 * lam[1:]
    return h.with_values(out / om.reshape(shape))


def _check_degenerate(S: SourceDecomposition, params: KineticParams):
    checks = (("s1", Hdot_v(-params.beta)), ("s2", Hdot_x(-params.s_x)))
    for name, space in checks:
        part = getattr(S, name)
        if part is not None:
            m = degenerate_mass(part, space, params)
            if m > DEGENERATE_TOL:
                raise DegenerateModeError(f"{name} carries mass {m:.3e} on modes where its norm is infinite")


def _total_galilean(S, params: KineticParams) -> SpectralField:
    if isinstance(S, SourceDecomposition):
        _check_degenerate(S, params)
        S = S.total()
    return to_frame(S, Frame.GALILEAN)


def solve_forward(S, params: KineticParams, frame: Frame = Frame.PHYSICAL) -> SpectralField:
    """``f = K^+ S``: Galilean shear, causal Duhamel solve, shear back."""
    h = _total_galilean(S, params)
    return to_frame(apply_T(h, params), frame)


def solve_backward(S, params: KineticParams, frame: Frame = Frame.PHYSICAL) -> SpectralField:
    """``f = K^- S`` via the discrete adjoint of the forward solve."""
    h = _total_galilean(S, params)
    return to_frame(apply_T_star(h, params), frame)


def solve_cauchy(psi, S, params: KineticParams, grid=None, frame: Frame = Frame.PHYSICAL,
                 psi_frame: Frame = Frame.PHYSICAL) -> SpectralField:
    """Solve from ``t_start`` with initial data ``psi`` and optional source ``S``.

    ``psi`` is a mode array of shape ``grid.mode_shape`` or a field whose first slice is used.
    """
    if isinstance(psi, SpectralField):
        grid = psi.grid
        psi_frame = psi.frame
        psi = psi.values[0]
    if grid is None:
        if S is None:
            raise ValueError("grid is required when neither psi nor S carries one")
        grid = S.grid
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != grid.mode_shape:
        raise ValueError(f"psi has shape {psi.shape}, expected {grid.mode_shape}")
    g0 = slice_to_frame(psi, grid, grid.t_start, psi_frame, Frame.GALILEAN)
    c = step_coefficients(grid, params)
    if S is None:
        h = np.zeros(grid.field_shape, dtype=np.complex128)
    else:
        h = _total_galilean(S, params).values
    gal = SpectralField(_forward(h, c, g0), Frame.GALILEAN, grid)
    out = to_frame(gal, frame)
    if frame is Frame(psi_frame):
        vals = out.values.copy()
        vals[0] = psi
        out = out.with_values(vals)
    return out


# ---------------------------------------------------------------------------
# residual operators


def _symbol(grid, params: KineticParams) -> np.ndarray:
    """``|xi - t phi|^{2 beta}`` for every Galilean mode and time."""
    out = np.empty(grid.field_shape)
    for n, t in enumerate(grid.times()):
        xe = effective_xi(grid, Frame.GALILEAN, t)
        out[n] = np.sum(xe * xe, axis=-1) ** params.beta
    return out


def transport(f: SpectralField) -> SpectralField:
    """``(d/dt + v . grad_x) f`` by second-order differences in the Galilean frame."""
    g = to_frame(f, Frame.GALILEAN)
    dg = np.gradient(g.values, f.grid.dt, axis=0, edge_order=2)
    return to_frame(g.with_values(dg), f.frame)


def diffusion(f: SpectralField, params: KineticParams) -> SpectralField:
    """``(-Delta_v)^beta f`` as the exact multiplier, frame preserved."""
    out = np.empty_like(f.values)
    for n, t in enumerate(f.grid.times()):
        xe = effective_xi(f.grid, f.frame, t)
        out[n] = np.sum(xe * xe, axis=-1) ** params.beta * f.values[n]
    return f.with_values(out)


def apply_symbol(f: SpectralField, params: KineticParams, direction: int = 1) -> SpectralField:
    """``+-(d/dt + v . grad_x) f + (-Delta_v)^beta f``, returned in ``f``'s frame."""
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    g = to_frame(f, Frame.GALILEAN)
    dg = np.gradient(g.values, f.grid.dt, axis=0, edge_order=2)
    res = direction * dg + _symbol(f.grid, params) * g.values
    return to_frame(g.with_values(res), f.frame)
