"""Embedding (transfer of regularity) reports and energy-balance checks on fields."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import KineticParams, SourceDecomposition, SpectralField, to_frame, to_real_space
from .kolmogorov import transport
from .norms import Hdot_v, Hdot_x, L2, TimeMode, norm, slice_norms, slice_pairings, source_norms, trapezoid_weights

EMBEDDING_COLUMNS = (
    "lhs_sup_t", "lhs_dx", "rhs_dv", "rhs_s1", "rhs_s2", "rhs_s3", "ratio", "violation",
    "kappa", "kappa_norm", "kappa_ratio", "multiplicative_ratio",
)


class DecompositionError(ValueError):
    """The supplied decomposition does not match the transport of the field."""


@dataclass(frozen=True)
class KappaCheck:
    kappa: float
    lp_norm: float  # ||f||_{L^{2 kappa}_{t,x,v}}
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lp_norm / self.rhs if self.rhs > 0 else math.nan


@dataclass(frozen=True)
class EmbeddingReport:
    lhs_sup_t: float
    lhs_dx: float
    rhs_dv: float
    rhs_s1: float
    rhs_s2: float
    rhs_s3: float
    kappa_check: KappaCheck | None = None
    residual: float = 0.0
    ceiling: float | None = None
    multiplicative_ratio: float = math.nan

    @property
    def rhs(self) -> float:
        return self.rhs_dv + self.rhs_s1 + self.rhs_s2 + self.rhs_s3

    @property
    def ratio(self) -> float:
        """(sup_t |f| + |D_x^{s} f|) / (|D_v^b f| + source norms); NaN when the denominator vanishes."""
        return (self.lhs_sup_t + self.lhs_dx) / self.rhs if self.rhs > 0 else math.nan

    @property
    def violation(self) -> bool:
        return self.ceiling is not None and self.ratio > self.ceiling

    def row(self) -> dict:
        k = self.kappa_check
        vals = {
            "lhs_sup_t": self.lhs_sup_t, "lhs_dx": self.lhs_dx, "rhs_dv": self.rhs_dv,
            "rhs_s1": self.rhs_s1, "rhs_s2": self.rhs_s2, "rhs_s3": self.rhs_s3, "ratio": self.ratio,
            "kappa": k.kappa if k else math.nan, "kappa_norm": k.lp_norm if k else math.nan,
            "kappa_ratio": k.ratio if k else math.nan, "multiplicative_ratio": self.multiplicative_ratio,
        }
        out = {key: repr(float(v)) for key, v in vals.items()}
        out["violation"] = str(self.violation).lower()
        return out


def decomposition_residual(f: SpectralField, decomposition: SourceDecomposition) -> float:
    """Relative L^2 mismatch between the discrete transport of ``f`` and the decomposition."""
    tf = transport(f)
    total = to_frame(decomposition.total(), f.frame)
    diff = norm(tf - total, L2(), KineticParams(1.0))
    scale = max(norm(tf, L2(), KineticParams(1.0)), norm(total, L2(), KineticParams(1.0)))
    return diff / scale if scale > 0 else 0.0


def _check(f, decomposition, residual_tol):
    if decomposition.grid != f.grid:
        raise DecompositionError("decomposition lives on a different grid")
    res = decomposition_residual(f, decomposition)
    if residual_tol is not None and res > residual_tol:
        raise DecompositionError(f"decomposition residual {res:.3e} exceeds {residual_tol:.1e}")
    return res


def lp_norm(f: SpectralField, p: float) -> float:
    """||f||_{L^p_{t,x,v}} from physical samples; trapezoid in t, rectangle rule in (x, v)."""
    g = f.grid
    samples = to_real_space(f)
    cell = (g.h_x * g.h_v) ** g.dim
    axes = tuple(range(1, samples.ndim))
    per_t = cell * np.sum(np.abs(samples) ** p, axis=axes)
    return float(np.dot(trapezoid_weights(len(per_t), g.dt), per_t) ** (1.0 / p))


def kappa_check(f: SpectralField, params: KineticParams, rhs: float) -> KappaCheck:
    k = params.kappa
    return KappaCheck(k, lp_norm(f, 2.0 * k), rhs)


def multiplicative_ratio(f: SpectralField, params: KineticParams, transport_field: SpectralField | None = None) -> float:
    """sup_t |f(t)|^2 / (2 |D_v^b f| |(d_t + v.grad_x) f|_{L^2 H^{-b}_v})."""
    tf = transport(f) if transport_field is None else transport_field
    lhs = norm(f, L2(TimeMode.SUP), params) ** 2
    rhs = 2.0 * norm(f, Hdot_v(params.beta), params) * norm(tf, Hdot_v(-params.beta), params)
    return lhs / rhs if rhs > 0 else math.nan


def embedding_report(
    f: SpectralField, transport_decomposition: SourceDecomposition, params: KineticParams, *,
    residual_tol: float | None = 1e-8, ceiling: float | None = None, with_kappa: bool = True,
) -> EmbeddingReport:
    """Both sides of the kinetic embedding inequality for ``f``.

    Norms are taken in the frame ``f`` is stored in; Galilean storage avoids the
    interpolation leakage of a frame change onto degenerate modes.

    ``transport_decomposition`` must equal the discrete ``(d_t + v.grad_x) f`` up to
    ``residual_tol`` (relative L^2); pass ``None`` to skip the gate.
    """
    res = _check(f, transport_decomposition, residual_tol)
    sup_t = norm(f, L2(TimeMode.SUP), params)
    dx = norm(f, Hdot_x(params.s_x), params)
    dv = norm(f, Hdot_v(params.beta), params)
    sn = source_norms(transport_decomposition, params)
    rep = EmbeddingReport(sup_t, dx, dv, sn["s1"], sn["s2"], sn["s3"], residual=res, ceiling=ceiling)
    rhs = rep.rhs
    kc = kappa_check(f, params, rhs) if with_kappa and rhs > 0 else None
    mult = math.nan
    if transport_decomposition.s1 is not None and transport_decomposition.s2 is None and transport_decomposition.s3 is None:
        mult = multiplicative_ratio(f, params, to_frame(transport_decomposition.s1, f.frame))
    return EmbeddingReport(sup_t, dx, dv, sn["s1"], sn["s2"], sn["s3"], kc, res, ceiling, mult)


@dataclass(frozen=True)
class ContinuityReport:
    """Centered difference of |f(t)|^2 against 2 Re of the source pairings."""

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def max_mismatch(self) -> float:
        return float(np.max(np.abs(self.lhs - self.rhs))) if self.lhs.size else 0.0

    @property
    def relative_mismatch(self) -> float:
        scale = float(np.max(np.abs(self.rhs))) if self.rhs.size else 0.0
        return self.max_mismatch / scale if scale > 0 else self.max_mismatch


def absolute_continuity_check(f: SpectralField, transport_decomposition: SourceDecomposition, *,
                              residual_tol: float | None = 1e-8) -> ContinuityReport:
    _check(f, transport_decomposition, residual_tol)
    params = KineticParams(1.0)
    e = slice_norms(f, L2(), params).sq
    dt = f.grid.dt
    lhs = (e[2:] - e[:-2]) / (2.0 * dt)
    pair = np.zeros(len(e), dtype=complex)
    for _, part in transport_decomposition.present():
        pair += slice_pairings(to_frame(part, f.frame), f)
    rhs = 2.0 * pair.real[1:-1]
    return ContinuityReport(f.grid.times()[1:-1], lhs, rhs)


def refinement_order(errors, factor: float = 2.0) -> np.ndarray:
    """Observed orders between consecutive refinement levels."""
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / math.log(factor)
