"""Independent reference computations used by the tests.

Nothing here imports the kinfp numerics it is used to check.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp


def adaptive_simpson(f, a: float, b: float, rtol: float = 1e-14, max_depth: int = 60, atol: float = 0.0) -> float:
    """Recursive adaptive Simpson with Richardson correction.

    ``atol`` is an absolute target for the whole of [a, b], spread over subintervals by width.
    """
    if a == b:
        return 0.0

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = simpson(fa, fm, fb, a, b)
    scale = abs(whole) + 1e-300

    def rec(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        err = left + right - whole
        if depth >= max_depth or abs(err) <= 15.0 * max(rtol * scale, atol) * (b - a) / span:
            return left + right + err / 15.0
        return rec(a, m, fa, flm, fm, left, depth + 1) + rec(m, b, fm, frm, fb, right, depth + 1)

    span = b - a
    return rec(a, b, fa, fm, fb, whole, 0)


def phase_oracle(s, t, phi, xi, beta, rtol=1e-14) -> float:
    """int_s^t |xi - tau phi|^{2 beta} d tau by adaptive Simpson on the raw integrand, split at the kink."""
    phi = np.atleast_1d(np.asarray(phi, float))
    xi = np.atleast_1d(np.asarray(xi, float))

    def f(tau):
        r = xi - tau * phi
        return math.sqrt(float(r @ r)) ** (2.0 * beta)

    s, t = float(s), float(t)
    pp = float(phi @ phi)
    # absolute target from a crude mean, floored at the rounding noise of xi - tau phi
    grid = np.linspace(s, t, 65)
    crude = (t - s) * float(np.mean([f(x) for x in grid]))
    big = float(np.max(np.abs(xi))) + max(abs(s), abs(t)) * math.sqrt(pp)
    atol = max(rtol * crude, 100.0 * np.finfo(float).eps * big ** (2.0 * beta) * (t - s))
    # split at the closest approach of the line to the origin, where the integrand kinks
    tau = float(phi @ xi) / pp if pp > 0 else s
    if s < tau < t:
        return adaptive_simpson(f, s, tau, rtol, atol=atol) + adaptive_simpson(f, tau, t, rtol, atol=atol)
    return adaptive_simpson(f, s, t, rtol, atol=atol)


def heat_mode_duhamel(c: float, a: float, t: np.ndarray) -> np.ndarray:
    """g' + a g = c, g(0) = 0."""
    return c * (1.0 - np.exp(-a * t)) / a


def scalar_ode(rate, source, t_eval, g0=0.0, rtol=1e-12, atol=1e-14) -> np.ndarray:
    """g' + rate(t) g = source(t) with DOP853; complex values handled as pairs."""

    def rhs(t, y):
        g = y[0] + 1j * y[1]
        d = source(t) - rate(t) * g
        return [d.real, d.imag]

    sol = solve_ivp(rhs, (t_eval[0], t_eval[-1]), [np.real(g0), np.imag(g0)], method="DOP853",
                    t_eval=t_eval, rtol=rtol, atol=atol)
    return sol.y[0] + 1j * sol.y[1]


def dense_operator(apply, n: int) -> np.ndarray:
    """Matrix of a linear map on C^n by applying it to unit vectors."""
    cols = []
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = 1.0
        cols.append(apply(e))
    return np.stack(cols, axis=1)


def direct_mode_sum(c: np.ndarray, phi: np.ndarray, xi: np.ndarray, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """f(x, v) = sum c[k, l] exp(i (phi_k x + xi_l v)) by explicit summation (d = 1)."""
    ex = np.exp(1j * np.outer(x, phi))
    ev = np.exp(1j * np.outer(v, xi))
    return ex @ c @ ev.T
