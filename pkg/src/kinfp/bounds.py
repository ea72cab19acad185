"""Numerical evidence for the kernel and weighted-operator estimates.

Every routine returns a :class:`BoundReport` with the extreme sampled ratios;
two-sided estimates must have ``0 < low <= high < inf``, one-sided ones a
finite ``high``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

from .core import KineticParams
from .kolmogorov import phase_integral
from .norms import weight_base


class ConvergenceError(RuntimeError):
    pass


class EstimateId(enum.Enum):
    COMP = "Comp"
    K1 = "K1"
    K2 = "K2"
    K4 = "K4"
    K5 = "K5"
    K6 = "K6"
    EQUIV_AB = "EquivAB"
    T_L2L2 = "T_L2L2"
    T_L1L2 = "T_L1L2"
    T_L2C0 = "T_L2C0"
    T_L1C0 = "T_L1C0"


TWO_SIDED = {EstimateId.COMP, EstimateId.K1, EstimateId.K2, EstimateId.EQUIV_AB}
OPERATOR_BOUNDS = (EstimateId.T_L2L2, EstimateId.T_L1L2, EstimateId.T_L2C0, EstimateId.T_L1C0)

CSV_COLUMNS = (
    "estimate_id", "beta", "dim", "sample_count", "worst_ratio_low", "worst_ratio_high",
    "valid", "seed", "sampling_spec",
)


@dataclass
class BoundReport:
    estimate_id: EstimateId
    sample_count: int
    worst_ratio_low: float
    worst_ratio_high: float
    params: KineticParams
    sampling_spec: str
    seed: int | None = None
    details: dict = field(default_factory=dict)

    @property
    def two_sided(self) -> bool:
        return self.estimate_id in TWO_SIDED

    @property
    def valid(self) -> bool:
        hi_ok = math.isfinite(self.worst_ratio_high)
        if self.two_sided:
            return hi_ok and 0.0 < self.worst_ratio_low <= self.worst_ratio_high
        return hi_ok

    @property
    def spread(self) -> float:
        return self.worst_ratio_high / self.worst_ratio_low if self.worst_ratio_low > 0 else math.inf

    def row(self) -> dict:
        return {
            "estimate_id": self.estimate_id.value,
            "beta": repr(float(self.params.beta)),
            "dim": str(self.params.dim),
            "sample_count": str(self.sample_count),
            "worst_ratio_low": repr(float(self.worst_ratio_low)),
            "worst_ratio_high": repr(float(self.worst_ratio_high)),
            "valid": str(self.valid).lower(),
            "seed": "" if self.seed is None else str(self.seed),
            "sampling_spec": self.sampling_spec,
        }


# ---------------------------------------------------------------------------
# sampling helpers


def random_directions(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    if d == 1:
        return rng.choice([-1.0, 1.0], size=(n, 1))
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def log_modes(rng: np.random.Generator, n: int, d: int, lo: float = 1e-3, hi: float = 1e3):
    """Random modes with |phi|, |xi| log-uniform in [lo, hi] and random directions."""
    ap = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    ax = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    return ap[:, None] * random_directions(rng, n, d), ax[:, None] * random_directions(rng, n, d)


def _vn(a):
    return np.sqrt(np.sum(a * a, axis=-1))


def _kink_frame(phi, xi):
    """tau* (minimizer of |xi - tau phi|) and the residual vector xi - tau* phi."""
    pp = np.sum(phi * phi, axis=-1)
    safe = np.where(pp > 0, pp, 1.0)
    tau = np.where(pp > 0, np.sum(phi * xi, axis=-1) / safe, 0.0)
    return tau, xi - tau[..., None] * phi


def _wmin(phi, xi, beta):
    """Smallest value of W(t) along the line, reached at t = tau*."""
    _, z0 = _kink_frame(phi, xi)
    return np.maximum(_vn(z0), _vn(phi) ** (1.0 / (1.0 + 2.0 * beta)))


# ---------------------------------------------------------------------------
# comparison constants


def comp_integral(xi_n, phi_n, beta):
    """int_0^1 |xi' - tau phi'|^{2 beta} d tau."""
    n = xi_n.shape[0]
    return phase_integral(np.zeros(n), np.ones(n), phi_n, xi_n, beta)


def comparison_ratio(s, t, phi, xi, beta):
    """Phase integral over (t - s)(|xi - s phi|^{2b} + ((t - s)|phi|)^{2b})."""
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    num = phase_integral(s, t, phi, xi, beta)
    u = t - s
    den = u * (_vn(xi - s[..., None] * phi) ** (2 * beta) + (u * _vn(phi)) ** (2 * beta))
    return num / den


def sample_compact_set(rng, n: int, d: int, beta: float):
    """Points with |xi'|^{2b} + |phi'|^{2b} = 1, uniform in the mixing angle."""
    theta = rng.uniform(0.0, 0.5 * math.pi, n)
    # endpoints are included explicitly so the extremes are always probed
    if n >= 2:
        theta[0], theta[1] = 0.0, 0.5 * math.pi
    ax = np.cos(theta) ** (1.0 / beta)
    ap = np.sin(theta) ** (1.0 / beta)
    return ax[:, None] * random_directions(rng, n, d), ap[:, None] * random_directions(rng, n, d)


def estimate_comp_constants(beta: float, dim: int, n_samples: int, seed: int = 0) -> BoundReport:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    xi_n, phi_n = sample_compact_set(rng, n_samples, dim, beta)
    vals = comp_integral(xi_n, phi_n, beta)
    hom = 0.0
    for r in (0.5, 2.0):
        scaled = comp_integral(r * xi_n, r * phi_n, beta)
        hom = max(hom, float(np.max(np.abs(scaled - r ** (2 * beta) * vals) / (r ** (2 * beta) * vals))))
    return BoundReport(
        EstimateId.COMP, n_samples, float(vals.min()), float(vals.max()),
        KineticParams(beta, dim), "compact set |xi'|^{2b}+|phi'|^{2b}=1, uniform angle, random directions",
        seed, {"homogeneity_error": hom},
    )


# ---------------------------------------------------------------------------
# improper kernel integrals


@dataclass(frozen=True)
class _LineIntegrand:
    """exp(-alpha P(u)) * W(u)^p along zeta + u dir, in units of tau_c = W_min^{-2 beta}."""

    zeta: np.ndarray
    direction: np.ndarray
    phi_abs: np.ndarray
    tau_c: np.ndarray
    alpha: float
    power: float
    beta: float

    def weight(self, u):
        pos = self.zeta + u[:, None] * self.direction
        return np.maximum(_vn(pos), self.phi_abs ** (1.0 / (1.0 + 2.0 * self.beta)))

    def __call__(self, v):
        u = self.tau_c * v
        n = u.shape[0]
        ph = phase_integral(np.zeros(n), u, -self.direction, self.zeta, self.beta)
        out = self.tau_c * np.exp(-self.alpha * ph)
        if self.power != 0:
            out = out * self.weight(u) ** self.power
        return out


def _truncation_length(fn: _LineIntegrand, rel: float = 1e-16, v0: float = 8.0, vmax: float = 1e7) -> float:
    v = v0
    while v <= vmax:
        grid = np.linspace(0.0, v, 33)
        vals = np.stack([fn(np.full(fn.zeta.shape[0], g)) for g in grid])
        peak = vals.max(axis=0)
        if np.all(vals[-1] <= rel * peak):
            return v
        v *= 2.0
    raise ConvergenceError("integrand tail does not decay: degenerate mode in the sample")


_GL_X, _GL_W = np.polynomial.legendre.leggauss(15)


def _line_integrals(fn: _LineIntegrand, window_factor: float):
    """Composite Gauss-Legendre over [0, V] in tau_c units, graded geometrically at the kink.

    Phases at the nodes are accumulated from short consecutive pieces, so each
    call to the phase integral only sees a smooth, short interval.
    """
    v_end = window_factor * _truncation_length(fn)
    n = fn.zeta.shape[0]
    dd = np.sum(fn.direction**2, axis=-1)
    u_star = np.where(dd > 0, -np.sum(fn.zeta * fn.direction, axis=-1) / np.where(dd > 0, dd, 1.0), -1.0)
    v_star = u_star / fn.tau_c
    n_u = max(64, math.ceil(v_end / 0.5))
    base = np.broadcast_to(np.linspace(0.0, v_end, n_u + 1), (n, n_u + 1))
    offs = 0.5 * 2.0 ** -np.arange(1, 46)
    kinks = [v_star]
    if fn.power != 0:
        # W switches branch where |zeta + u dir| = |phi|^{1/(1+2b)}
        c2 = fn.phi_abs ** (2.0 / (1.0 + 2.0 * fn.beta))
        perp2 = np.sum((fn.zeta + u_star[:, None] * fn.direction) ** 2, axis=-1)
        gap = np.sqrt(np.maximum(c2 - perp2, 0.0) / np.where(dd > 0, dd, 1.0))
        kinks += [(u_star - gap) / fn.tau_c, (u_star + gap) / fn.tau_c]
    pieces = [np.broadcast_to(offs, (n, offs.size))]
    for k in kinks:
        pieces += [k[:, None] - offs, k[:, None], k[:, None] + offs]
    graded = np.concatenate(pieces, axis=1)
    bp = np.sort(np.clip(np.concatenate([base, graded], axis=1), 0.0, v_end), axis=1)
    a, b = bp[:, :-1], bp[:, 1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[..., None] + half[..., None] * _GL_X
    seq = np.concatenate([a[..., None], nodes], axis=2).reshape(n, -1)
    seq = np.concatenate([seq, bp[:, -1:]], axis=1) * fn.tau_c[:, None]
    steps = phase_integral(seq[:, :-1], seq[:, 1:], -fn.direction[:, None, :], fn.zeta[:, None, :], fn.beta)
    cum = np.concatenate([np.zeros((n, 1)), np.cumsum(steps, axis=1)], axis=1)
    P = cum[:, :-1].reshape(a.shape + (16,))[..., 1:]
    vals = fn.tau_c[:, None, None] * np.exp(-fn.alpha * P)
    if fn.power != 0:
        u = nodes * fn.tau_c[:, None, None]
        pos = fn.zeta[:, None, None, :] + u[..., None] * fn.direction[:, None, None, :]
        w = np.maximum(_vn(pos), fn.phi_abs[:, None, None] ** (1.0 / (1.0 + 2.0 * fn.beta)))
        vals = vals * w**fn.power
    return np.sum(half * (vals @ _GL_W), axis=1), v_end


def verify_kernel_integrals(
    estimate_id, beta: float, dim: int, n_modes: int = 200, *, alpha: float = 1.0, eps: float = 0.5,
    seed: int = 0, window_factor: float = 1.0, lo: float = 1e-3, hi: float = 1e3,
) -> BoundReport:
    """Ratios of the improper kernel integrals against their weight predictions.

    K1:  int_{-inf}^t K(t,s)^alpha ds * W(t)^{2b}
    K2:  int_s^inf K(t,s)^alpha dt * W(s)^{2b}
    K5:  int_{-inf}^t K(t,s) W(s)^{2b-eps} ds * W(t)^eps
    K6:  int_s^inf K(t,s) W(t)^{2b-eps} dt * W(s)^eps
    """
    eid = EstimateId(estimate_id)
    rng = np.random.default_rng(seed)
    phi, xi = log_modes(rng, n_modes, dim, lo, hi)
    tau_star, _ = _kink_frame(phi, xi)
    tau_c = _wmin(phi, xi, beta) ** (-2.0 * beta)
    # base time near the kink, within a few natural time units either side
    t0 = tau_star + tau_c * rng.uniform(-3.0, 3.0, n_modes)
    ratio, v_end = kernel_integral_ratios(eid, phi, xi, t0, beta, alpha=alpha, eps=eps, window_factor=window_factor)
    a = alpha if eid in (EstimateId.K1, EstimateId.K2) else 1.0
    spec = (f"{eid.value}: |phi|,|xi| log-uniform in [{lo:g},{hi:g}], t within 3 tau_c of the kink, "
            f"alpha={a:g}" + ("" if eid in (EstimateId.K1, EstimateId.K2) else f", eps={eps:g}")
            + f", window {v_end:g} tau_c")
    return BoundReport(eid, n_modes, float(ratio.min()), float(ratio.max()), KineticParams(beta, dim),
                       spec, seed, {"ratios": ratio, "window": v_end})


def kernel_integral_ratios(estimate_id, phi, xi, t0, beta: float, *, alpha: float = 1.0, eps: float = 0.5,
                           window_factor: float = 1.0):
    """Per-mode ratios for explicit modes ``phi``, ``xi`` of shape (n, d) at base times ``t0``.

    Returns the ratios and the integration window in units of the kink time scale.
    """
    eid = EstimateId(estimate_id)
    if eid not in (EstimateId.K1, EstimateId.K2, EstimateId.K5, EstimateId.K6):
        raise ValueError(f"{eid} is not an integral kernel estimate")
    phi = np.atleast_2d(np.asarray(phi, float))
    xi = np.atleast_2d(np.asarray(xi, float))
    t0 = np.broadcast_to(np.asarray(t0, float), phi.shape[:1])
    tau_c = _wmin(phi, xi, beta) ** (-2.0 * beta)
    zeta = xi - t0[:, None] * phi
    backward = eid in (EstimateId.K1, EstimateId.K5)
    direction = phi if backward else -phi
    a = alpha if eid in (EstimateId.K1, EstimateId.K2) else 1.0
    p = 0.0 if eid in (EstimateId.K1, EstimateId.K2) else 2.0 * beta - eps
    fn = _LineIntegrand(zeta, direction, _vn(phi), tau_c, a, p, beta)
    vals, v_end = _line_integrals(fn, window_factor)
    w0 = weight_base(t0, phi, xi, beta)
    pred_exp = 2.0 * beta if p == 0.0 else eps
    return vals * w0**pred_exp, v_end


def equiv_ab_ratio(A, B, c: float, beta: float, epsrel: float = 1e-10, window_factor: float = 1.0) -> np.ndarray:
    """int_0^inf exp(-c u^{1+2b} A^{2b} - c u B^{2b}) du * sup(B, A^{1/(1+2b)})^{2b}."""
    A = np.atleast_1d(np.asarray(A, float))
    B = np.atleast_1d(np.asarray(B, float))
    sup = np.maximum(B, A ** (1.0 / (1.0 + 2.0 * beta)))
    if np.any(sup == 0):
        raise ValueError("A = B = 0 gives a divergent integral")
    a = (A ** (1.0 / (1.0 + 2.0 * beta)) / sup) ** (2.0 * beta * (1.0 + 2.0 * beta))
    b = (B / sup) ** (2.0 * beta)

    def f(v):
        return np.exp(-c * (a * v ** (1.0 + 2.0 * beta) + b * v))

    # max(a, b) == 1 so the integrand is below 1e-16 beyond this point
    end = window_factor * max(40.0 / c, (40.0 / c) ** (1.0 / (1.0 + 2.0 * beta)))
    res, _ = quad_vec(f, 0.0, end, epsabs=0.0, epsrel=epsrel, norm="max", limit=4000)
    return np.asarray(res)


def verify_equiv_ab(beta: float, n_samples: int = 200, c: float = 1.0, seed: int = 0,
                    lo: float = 1e-3, hi: float = 1e3, window_factor: float = 1.0) -> BoundReport:
    rng = np.random.default_rng(seed)
    A = np.exp(rng.uniform(math.log(lo), math.log(hi), n_samples))
    B = np.exp(rng.uniform(math.log(lo), math.log(hi), n_samples))
    A[0] = 0.0
    r = equiv_ab_ratio(A, B, c, beta, window_factor=window_factor)
    return BoundReport(EstimateId.EQUIV_AB, n_samples, float(r.min()), float(r.max()), KineticParams(beta, 1),
                       f"A,B log-uniform in [{lo:g},{hi:g}] plus A=0, c={c:g}", seed, {"ratios": r})


def verify_k4(beta: float, dim: int, n_samples: int = 1000, eps: float = 1.0, seed: int = 0,
              lo: float = 1e-3, hi: float = 1e3) -> BoundReport:
    """sup(W^eps(t), W^eps(s)) K(t,s) / inf(W^eps(t), W^eps(s)) for s <= t."""
    rng = np.random.default_rng(seed)
    phi, xi = log_modes(rng, n_samples, dim, lo, hi)
    tau_star, _ = _kink_frame(phi, xi)
    tau_c = _wmin(phi, xi, beta) ** (-2.0 * beta)
    s = tau_star + tau_c * rng.uniform(-5.0, 5.0, n_samples)
    t = s + tau_c * np.exp(rng.uniform(math.log(1e-3), math.log(10.0), n_samples))
    K = np.exp(-phase_integral(s, t, phi, xi, beta))
    ws = weight_base(s, phi, xi, beta)
    wt = weight_base(t, phi, xi, beta)
    r = K * (np.maximum(wt, ws) / np.minimum(wt, ws)) ** abs(eps)
    return BoundReport(EstimateId.K4, n_samples, float(r.min()), float(r.max()), KineticParams(beta, dim),
                       f"K4 eps={eps:g}: s near the kink, t-s log-uniform in [1e-3,10] tau_c", seed, {"ratios": r})


# ---------------------------------------------------------------------------
# weighted operator norms


@dataclass(frozen=True)
class ModeWindow:
    """Local time lattice centred on the kink of one mode."""

    sigma: np.ndarray  # local times t - tau*
    weight: np.ndarray  # W at each lattice time
    cum_phase: np.ndarray  # P(sigma_0, sigma_n)
    tau_c: float

    @property
    def dt(self) -> float:
        return float(self.sigma[1] - self.sigma[0])

    def kernel(self) -> np.ndarray:
        """Lower-triangular K(t_n, t_m)."""
        diff = self.cum_phase[:, None] - self.cum_phase[None, :]
        return np.tril(np.exp(-np.maximum(diff, 0.0)))


def mode_window(phi, xi, beta: float, half_width: float, resolution: float = 0.25,
                min_points: int = 256, max_points: int = 4096) -> ModeWindow:
    phi = np.atleast_1d(np.asarray(phi, float))
    xi = np.atleast_1d(np.asarray(xi, float))
    _, z0 = _kink_frame(phi[None], xi[None])
    z0 = z0[0]
    wmin = float(_wmin(phi[None], xi[None], beta)[0])
    tau_c = wmin ** (-2.0 * beta)
    span = half_width * tau_c
    a_max = float(np.linalg.norm(np.abs(z0) + span * np.abs(phi))) ** (2.0 * beta)
    n = int(np.clip(math.ceil(2.0 * span * a_max / resolution), min_points, max_points))
    sigma = np.linspace(-span, span, n + 1)
    steps = phase_integral(sigma[:-1], sigma[1:], phi[None], z0[None], beta)
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    w = weight_base(sigma, phi[None], z0[None], beta)
    return ModeWindow(sigma, w, cum, tau_c)


def _trap(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _quad_matrix(n: int, dt: float) -> np.ndarray:
    """Row n holds trapezoid weights for integrals over [t_0, t_n]."""
    Q = np.tril(np.full((n, n), dt))
    Q[:, 0] *= 0.5
    Q[np.arange(n), np.arange(n)] *= 0.5
    Q[0, 0] = 0.0
    return Q


def power_iteration_norm(C: np.ndarray, tol: float = 1e-8, max_iter: int = 10000, seed: int = 0) -> float:
    """Largest singular value of ``C`` by power iteration on C^T C."""
    rng = np.random.default_rng(seed)
    x = 1.0 + rng.random(C.shape[1])
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = C.T @ (C @ x)
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        x = y / new
        if abs(new - lam) <= tol * new:
            return math.sqrt(new)
        lam = new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def weighted_norm(bound_id, K: np.ndarray, W: np.ndarray, dt: float, gamma: float, beta: float) -> float:
    """Discrete norm of the weighted Duhamel operator with kernel matrix ``K``."""
    eid = EstimateId(bound_id)
    n = K.shape[0]
    om = _trap(n, dt)
    if eid is EstimateId.T_L2L2:
        B = (W**gamma)[:, None] * (K * _quad_matrix(n, dt)) * (W ** (2 * beta - gamma))[None, :]
        C = np.sqrt(om)[:, None] * B / np.sqrt(om)[None, :]
        return power_iteration_norm(C)
    if eid is EstimateId.T_L1L2:
        # sup over s of the L^2_t norm of the weighted column
        B = (W**gamma)[:, None] * K * (W ** (beta - gamma))[None, :]
        return float(np.sqrt(np.max(om @ (B * B))))
    if eid is EstimateId.T_L2C0:
        B = (W ** (gamma - beta))[:, None] * K * (W ** (2 * beta - gamma))[None, :]
        Q = _quad_matrix(n, dt)
        return float(np.sqrt(np.max(np.sum(Q * B * B, axis=1))))
    if eid is EstimateId.T_L1C0:
        B = (W ** (gamma - beta))[:, None] * K * (W ** (beta - gamma))[None, :]
        return float(np.max(B))
    raise ValueError(f"{eid} is not an operator bound")


def operator_norm_scan(
    bound_id, gamma: float, beta: float, mode_samples=100, *, dim: int = 2, t_window: float = 2.0,
    seed: int = 0, resolution: float = 0.25, max_points: int = 4096,
) -> BoundReport:
    """Per-mode weighted norms of T over a window of ``t_window`` kink time scales each side.

    ``mode_samples`` is either a count (a square log grid of |phi|, |xi| with random
    directions) or a pair of arrays ``(phi, xi)`` of shape ``(n, dim)``.
    """
    eid = EstimateId(bound_id)
    if eid not in OPERATOR_BOUNDS:
        raise ValueError(f"{eid} is not an operator bound")
    if isinstance(mode_samples, (int, np.integer)):
        phi, xi = mode_grid(int(mode_samples), dim, seed)
    else:
        phi, xi = (np.asarray(a, float) for a in mode_samples)
        dim = phi.shape[1]
    norms = np.empty(phi.shape[0])
    edge = 0.0
    for i in range(phi.shape[0]):
        win = mode_window(phi[i], xi[i], beta, t_window, resolution=resolution, max_points=max_points)
        norms[i] = weighted_norm(eid, win.kernel(), win.weight, win.dt, gamma, beta)
        edge = max(edge, math.exp(-win.cum_phase[-1]))
    spec = (f"{eid.value} gamma={gamma:g}: {phi.shape[0]} modes, |phi|,|xi| log grid in [1e-3,1e3], "
            f"window +-{t_window:g} tau_c")
    return BoundReport(eid, phi.shape[0], float(norms.min()), float(norms.max()), KineticParams(beta, dim), spec,
                       seed, {"norms": norms, "edge_kernel": edge, "gamma": gamma})


def mode_grid(n: int, dim: int, seed: int = 0, lo: float = 1e-3, hi: float = 1e3):
    """About ``n`` modes on a square log-spaced grid of (|phi|, |xi|) with random directions."""
    side = max(1, int(round(math.sqrt(n))))
    mags = np.logspace(math.log10(lo), math.log10(hi), side)
    ap, ax = np.meshgrid(mags, mags, indexing="ij")
    ap, ax = ap.ravel(), ax.ravel()
    rng = np.random.default_rng(seed)
    m = ap.size
    return ap[:, None] * random_directions(rng, m, dim), ax[:, None] * random_directions(rng, m, dim)
