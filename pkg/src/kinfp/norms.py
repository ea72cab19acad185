"""Anisotropic multiplier norms built from the weights w and W."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import KineticParams, SpectralField, check_compatible, effective_xi, mode_vectors

DEGENERATE_TOL = 1e-10


class DegenerateModeError(ValueError):
    """A negative-order homogeneous norm met mass on a mode where it is infinite."""


class WeightKind(enum.Enum):
    SMALL_W = "SmallW"
    BIG_W = "BigW"


@dataclass(frozen=True)
class WeightSpec:
    kind: WeightKind
    exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", WeightKind(self.kind))


def _vnorm(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return np.abs(a)
    return np.sqrt(np.sum(a * a, axis=-1))


def weight_base(t, phi, xi, beta: float) -> np.ndarray:
    """W(t, phi, xi) = max(|xi - t phi|, |phi|^{1/(1+2 beta)}).

    ``phi`` and ``xi`` carry the vector index on the last axis; 0-d inputs mean d = 1.
    """
    phi = np.asarray(phi, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if phi.ndim == 0:
        phi = phi[None]
    if xi.ndim == 0:
        xi = xi[None]
    t = np.asarray(t, dtype=float)[..., None]
    return np.maximum(_vnorm(xi - t * phi), _vnorm(phi) ** (1.0 / (1.0 + 2.0 * beta)))


def power(base, exponent: float) -> np.ndarray:
    """``base ** exponent`` with 0 to a negative power mapped to +inf."""
    base = np.asarray(base, dtype=float)
    with np.errstate(divide="ignore"):
        if exponent == 0:
            return np.ones_like(base)
        out = base**exponent
    if exponent < 0:
        out = np.where(base == 0, np.inf, out)
    return out


def eval_weight(spec: WeightSpec, t, phi, xi, params: KineticParams):
    """w or W at the point raised to ``spec.exponent`` (w ignores ``t``)."""
    tt = 0.0 if spec.kind is WeightKind.SMALL_W else t
    out = power(weight_base(tt, phi, xi, params.beta), spec.exponent)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# norm spaces


class TimeMode(enum.Enum):
    L2 = "L2_t"
    L1 = "L1_t"
    SUP = "Sup_t"
    FIXED = "Fixed_t"


class InnerKind(enum.Enum):
    L2 = "L2"
    HDOT_V = "Hdot_v"
    HDOT_X = "Hdot_x"
    XDOT = "Xdot"
    XDOT_SUM = "XdotSum"


@dataclass(frozen=True)
class NormSpace:
    inner: InnerKind = InnerKind.L2
    exponent: float = 0.0
    time: TimeMode = TimeMode.L2
    index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "inner", InnerKind(self.inner))
        object.__setattr__(self, "time", TimeMode(self.time))
        if self.time is TimeMode.FIXED and self.index is None:
            raise ValueError("Fixed_t needs a time index")
        if self.inner is InnerKind.XDOT and self.exponent < 0:
            raise ValueError("Xdot takes gamma >= 0; use XdotSum for negative orders")
        if self.inner is InnerKind.XDOT_SUM and self.exponent >= 0:
            raise ValueError("XdotSum takes gamma < 0")


def multiplier_sq(space: NormSpace, phi: np.ndarray, xi_eff: np.ndarray, beta: float):
    """Squared per-mode multiplier and the mask of excluded (degenerate) modes."""
    g = space.exponent
    ap = _vnorm(phi)
    ax = _vnorm(xi_eff)
    sx = 1.0 / (2.0 * beta + 1.0)
    none = np.zeros(ap.shape, dtype=bool)
    kind = space.inner
    if kind is InnerKind.L2:
        return np.ones_like(ap), none
    if kind is InnerKind.HDOT_V:
        return _masked_pow(ax, 2 * g)
    if kind is InnerKind.HDOT_X:
        return _masked_pow(ap, 2 * g)
    if kind is InnerKind.XDOT:
        return power(ax, 2 * g) + power(ap, 2 * g * sx), none
    # infimum over splittings f = f1 + f2 of m1^2|f1|^2 + m2^2|f2|^2 is |f|^2 / (1/m1^2 + 1/m2^2)
    denom = power(ax, -2 * g) + power(ap, -2 * g * sx)
    bad = denom == 0
    with np.errstate(divide="ignore"):
        m = np.where(bad, 0.0, 1.0 / np.where(bad, 1.0, denom))
    return m, bad


def _masked_pow(base, e):
    if e >= 0:
        return power(base, e), np.zeros(np.shape(base), dtype=bool)
    bad = base == 0
    return np.where(bad, 0.0, power(np.where(bad, 1.0, base), e)), bad


def trapezoid_weights(n_points: int, dt: float) -> np.ndarray:
    w = np.full(n_points, dt)
    w[0] = w[-1] = dt / 2.0
    return w


@dataclass(frozen=True)
class SliceNorms:
    sq: np.ndarray  # squared inner norm per time slice
    degenerate_mass: float  # max over slices of L^2 mass on excluded modes


def slice_norms(f: SpectralField, space: NormSpace, params: KineticParams) -> SliceNorms:
    g = f.grid
    phi, _ = mode_vectors(g)
    vol = g.volume
    sq = np.empty(g.n_t + 1)
    worst = 0.0
    for n, t in enumerate(g.times()):
        xi_eff = effective_xi(g, f.frame, t)
        m, bad = multiplier_sq(space, phi, xi_eff, params.beta)
        a2 = np.abs(f.values[n]) ** 2
        sq[n] = vol * np.sum(m * a2)
        if bad.any():
            worst = max(worst, vol * float(np.sum(a2[bad])))
    return SliceNorms(sq, worst)


def norm(f: SpectralField, space: NormSpace, params: KineticParams, degenerate_tol: float = DEGENERATE_TOL) -> float:
    """Quadrature-weighted multiplier norm of ``f``.

    Physical fields use the lattice xi; Galilean fields use the sheared frequency
    xi - t phi, so both frames give the same value for the same function.
    """
    sn = slice_norms(f, space, params)
    if sn.degenerate_mass > degenerate_tol:
        raise DegenerateModeError(
            f"{space.inner.value}({space.exponent}) is infinite: mass {sn.degenerate_mass:.3e} on degenerate modes"
        )
    q = sn.sq
    t = space.time
    if t is TimeMode.SUP:
        return float(np.sqrt(q.max()))
    if t is TimeMode.FIXED:
        return float(np.sqrt(q[space.index]))
    w = trapezoid_weights(len(q), f.grid.dt)
    if t is TimeMode.L2:
        return float(np.sqrt(np.dot(w, q)))
    return float(np.dot(w, np.sqrt(q)))


def degenerate_mass(f: SpectralField, space: NormSpace, params: KineticParams) -> float:
    return slice_norms(f, space, params).degenerate_mass


def slice_pairings(f: SpectralField, g: SpectralField) -> np.ndarray:
    """``<f(t_n), g(t_n)>_{L^2_{x,v}}`` for every slice."""
    check_compatible(f, g)
    axes = tuple(range(1, f.values.ndim))
    return f.grid.volume * np.sum(f.values * np.conj(g.values), axis=axes)


def duality_pairing(f: SpectralField, g: SpectralField) -> complex:
    """Space-time pairing, trapezoid in t."""
    p = slice_pairings(f, g)
    return complex(np.dot(trapezoid_weights(len(p), f.grid.dt), p))


# convenience constructors
def L2(time: TimeMode = TimeMode.L2, index: int | None = None) -> NormSpace:
    return NormSpace(InnerKind.L2, 0.0, time, index)


def Hdot_v(gamma: float, time: TimeMode = TimeMode.L2, index: int | None = None) -> NormSpace:
    return NormSpace(InnerKind.HDOT_V, gamma, time, index)


def Hdot_x(s: float, time: TimeMode = TimeMode.L2, index: int | None = None) -> NormSpace:
    return NormSpace(InnerKind.HDOT_X, s, time, index)


def Xdot(gamma: float, time: TimeMode = TimeMode.L2, index: int | None = None) -> NormSpace:
    if gamma < 0:
        return NormSpace(InnerKind.XDOT_SUM, gamma, time, index)
    return NormSpace(InnerKind.XDOT, gamma, time, index)


def source_norms(S, params: KineticParams) -> dict[str, float]:
    """Norms of each source part in its own space."""
    out = {"s1": 0.0, "s2": 0.0, "s3": 0.0}
    if S.s1 is not None:
        out["s1"] = norm(S.s1, Hdot_v(-params.beta), params)
    if S.s2 is not None:
        out["s2"] = norm(S.s2, Hdot_x(-params.s_x), params)
    if S.s3 is not None:
        out["s3"] = norm(S.s3, L2(TimeMode.L1), params)
    return out


def anisotropic_scale(phi, xi, r: float, beta: float):
    """Mode scaling under which w is homogeneous of degree one."""
    return r ** (2.0 * beta + 1.0) * np.asarray(phi, dtype=float), r * np.asarray(xi, dtype=float)


__all__ = [
    "DegenerateModeError",
    "WeightKind",
    "WeightSpec",
    "weight_base",
    "eval_weight",
    "TimeMode",
    "InnerKind",
    "NormSpace",
    "norm",
    "degenerate_mass",
    "duality_pairing",
    "slice_pairings",
    "trapezoid_weights",
    "L2",
    "Hdot_v",
    "Hdot_x",
    "Xdot",
    "source_norms",
]
