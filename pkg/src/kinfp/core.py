"""Parameters, phase-space grids, spectral fields and frame changes.

Mode coefficients follow the Fourier-series convention on the periodic box
``[-L_x, L_x)^d x [-L_v, L_v)^d``::

    f(x_j, v_l) = sum_{k,m} c[k, m] exp(i (phi_k . x_j + xi_m . v_l))

with grid points ``x_j = -L_x + j h_x`` and angular lattices
``phi_k = pi k / L_x``, ``xi_m = pi m / L_v`` stored in FFT order.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np


class AliasingWarning(UserWarning):
    """A frame change pushed mode content past the v-lattice Nyquist band."""


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class KineticParams:
    """Diffusion order ``beta``, dimension and ellipticity constants."""

    beta: float
    dim: int = 1
    lam: float = 1.0
    big_lambda: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive, got {self.beta}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if not (0 < self.lam <= self.big_lambda < math.inf):
            raise ValueError("need 0 < lam <= big_lambda < inf")

    @property
    def s_x(self) -> float:
        """x-regularity exponent beta / (2 beta + 1)."""
        return self.beta / (2.0 * self.beta + 1.0)

    @property
    def kappa(self) -> float:
        return 1.0 + self.beta / ((self.beta + 1.0) * self.dim)


@dataclass(frozen=True)
class PhaseGrid:
    n_x: int
    n_v: int
    half_len_x: float
    half_len_v: float
    t_start: float
    t_end: float
    n_t: int
    dim: int = 1

    def __post_init__(self):
        for name in ("n_x", "n_v"):
            n = getattr(self, name)
            if int(n) != n or n < 2 or n % 2:
                raise ValueError(f"{name} must be an even positive integer, got {n}")
        if not (self.half_len_x > 0 and self.half_len_v > 0):
            raise ValueError("box half-lengths must be positive")
        if not self.t_start < self.t_end:
            raise ValueError("need t_start < t_end")
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise ValueError("n_t must be a positive integer")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_t

    @property
    def h_x(self) -> float:
        return 2.0 * self.half_len_x / self.n_x

    @property
    def h_v(self) -> float:
        return 2.0 * self.half_len_v / self.n_v

    @property
    def mode_shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.dim + (self.n_v,) * self.dim

    @property
    def field_shape(self) -> tuple[int, ...]:
        return (self.n_t + 1,) + self.mode_shape

    @property
    def volume(self) -> float:
        """Measure of the periodic phase-space box."""
        return (2.0 * self.half_len_x) ** self.dim * (2.0 * self.half_len_v) ** self.dim

    @property
    def x_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim))

    @property
    def v_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim, 2 * self.dim))

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_t + 1)

    def rescaled(self, delta: float, beta: float) -> "PhaseGrid":
        """Grid carrying ``f(delta^{2b} t, delta^{2b+1} x, delta v)`` on relabeled lattices."""
        st = delta ** (2.0 * beta)
        return replace(
            self,
            half_len_x=self.half_len_x / delta ** (2.0 * beta + 1.0),
            half_len_v=self.half_len_v / delta,
            t_start=self.t_start / st,
            t_end=self.t_end / st,
        )


class Frame(enum.Enum):
    PHYSICAL = "physical"
    GALILEAN = "galilean"


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Mode coefficients over the time lattice; ``values.shape == grid.field_shape``."""

    values: np.ndarray
    frame: Frame
    grid: PhaseGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != self.grid.field_shape:
            raise GridMismatchError(
                f"values shape {vals.shape} does not match grid {self.grid.field_shape}"
            )
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "frame", Frame(self.frame))

    def with_values(self, values) -> "SpectralField":
        return SpectralField(values, self.frame, self.grid)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        check_compatible(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c) -> "SpectralField":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid: PhaseGrid, frame: Frame = Frame.PHYSICAL) -> "SpectralField":
        return cls(np.zeros(grid.field_shape, dtype=np.complex128), frame, grid)


def check_compatible(*fields: SpectralField, same_frame: bool = True):
    first = fields[0]
    for f in fields[1:]:
        if f.grid != first.grid:
            raise GridMismatchError("fields live on different grids")
        if same_frame and f.frame != first.frame:
            raise GridMismatchError("fields are in different frames")


@dataclass(frozen=True)
class SourceDecomposition:
    """``S = s1 + s2 + s3`` with s1 in L2 H^{-beta}_v, s2 in L2 H^{-s_x}_x, s3 in L1 L2."""

    s1: SpectralField | None = None
    s2: SpectralField | None = None
    s3: SpectralField | None = None

    def __post_init__(self):
        parts = self.present()
        if not parts:
            raise ValueError("a source decomposition needs at least one part")
        check_compatible(*[p for _, p in parts])

    def present(self) -> list[tuple[str, SpectralField]]:
        return [(k, getattr(self, k)) for k in ("s1", "s2", "s3") if getattr(self, k) is not None]

    @property
    def grid(self) -> PhaseGrid:
        return self.present()[0][1].grid

    @property
    def frame(self) -> Frame:
        return self.present()[0][1].frame

    def total(self) -> SpectralField:
        parts = [p for _, p in self.present()]
        out = parts[0].values.copy()
        for p in parts[1:]:
            out += p.values
        return parts[0].with_values(out)

    def in_frame(self, frame: Frame) -> "SourceDecomposition":
        return SourceDecomposition(**{k: to_frame(p, frame) for k, p in self.present()})


# ---------------------------------------------------------------------------
# lattices


def _axis_lattice(n: int, half_len: float) -> np.ndarray:
    return (math.pi / half_len) * np.fft.fftfreq(n, 1.0 / n)


def make_lattices(grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """1-D phi lattice, 1-D xi lattice (FFT order, shared by every axis) and time lattice."""
    return (
        _axis_lattice(grid.n_x, grid.half_len_x),
        _axis_lattice(grid.n_v, grid.half_len_v),
        grid.times(),
    )


def mode_vectors(grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
    """Broadcast phi and xi as arrays of shape ``mode_shape + (d,)``."""
    phi1, xi1, _ = make_lattices(grid)
    d = grid.dim
    axes = [phi1] * d + [xi1] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    phi = np.stack(mesh[:d], axis=-1)
    xi = np.stack(mesh[d:], axis=-1)
    return phi, xi


def velocity_points(grid: PhaseGrid) -> np.ndarray:
    return -grid.half_len_v + grid.h_v * np.arange(grid.n_v)


def position_points(grid: PhaseGrid) -> np.ndarray:
    return -grid.half_len_x + grid.h_x * np.arange(grid.n_x)


def effective_xi(grid: PhaseGrid, frame: Frame, t: float) -> np.ndarray:
    """Physical frequency carried by each stored mode at time ``t``: xi or xi - t phi."""
    phi, xi = mode_vectors(grid)
    if Frame(frame) is Frame.GALILEAN:
        return xi - t * phi
    return xi


# ---------------------------------------------------------------------------
# coefficient <-> sample transforms


def _alt_sign(n: int) -> np.ndarray:
    # (-1)^k on FFT-ordered indices (n even so the sign is well defined)
    return np.where(np.fft.fftfreq(n, 1.0 / n).astype(int) % 2 == 0, 1.0, -1.0)


def _sign_mask(shape_ns: list[int], axes: tuple[int, ...], ndim: int) -> np.ndarray:
    m = np.ones((1,) * ndim)
    for ax, n in zip(axes, shape_ns):
        s = _alt_sign(n).reshape([n if i == ax else 1 for i in range(ndim)])
        m = m * s
    return m


def coeffs_to_samples(c: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Fourier-series coefficients to grid samples along ``axes`` (box starting at -L)."""
    ns = [c.shape[a] for a in axes]
    sign = _sign_mask(ns, axes, c.ndim)
    return np.fft.ifftn(c * sign, axes=axes) * float(np.prod(ns))


def samples_to_coeffs(f: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    ns = [f.shape[a] for a in axes]
    sign = _sign_mask(ns, axes, f.ndim)
    return np.fft.fftn(f, axes=axes) * sign / float(np.prod(ns))


def _shift_axes(axes: tuple[int, ...], offset: int) -> tuple[int, ...]:
    return tuple(a + offset for a in axes)


def to_real_space(f: SpectralField) -> np.ndarray:
    """Physical-frame samples on the (t, x, v) grid."""
    g = f.grid
    phys = to_frame(f, Frame.PHYSICAL)
    return coeffs_to_samples(phys.values, _shift_axes(g.x_axes + g.v_axes, 1))


def from_real_space(samples: np.ndarray, grid: PhaseGrid, frame: Frame = Frame.PHYSICAL) -> SpectralField:
    samples = np.asarray(samples)
    c = samples_to_coeffs(samples, _shift_axes(grid.x_axes + grid.v_axes, 1))
    return to_frame(SpectralField(c, Frame.PHYSICAL, grid), frame)


def l2_norm_slices(f: SpectralField) -> np.ndarray:
    """Per-time-slice L^2_{x,v} norms by Plancherel."""
    axes = tuple(range(1, f.values.ndim))
    return np.sqrt(f.grid.volume * np.sum(np.abs(f.values) ** 2, axis=axes))


def is_hermitian(f: SpectralField, rtol: float = 1e-12) -> bool:
    """``value(-phi, -xi) == conj(value(phi, xi))`` at every time slice."""
    v = f.values
    flipped = v
    for ax in range(1, v.ndim):
        n = v.shape[ax]
        flipped = np.take(flipped, (-np.arange(n)) % n, axis=ax)
    scale = max(np.max(np.abs(v)), 1e-300)
    return bool(np.max(np.abs(flipped - np.conj(v))) <= rtol * scale)


# ---------------------------------------------------------------------------
# frame changes


def _shear(values: np.ndarray, grid: PhaseGrid, times: np.ndarray, sign: float) -> np.ndarray:
    """Multiply the (phi, v) representation by exp(sign * i t phi . v) slice by slice."""
    d = grid.dim
    v_axes = _shift_axes(grid.v_axes, 1)
    phi1, _, _ = make_lattices(grid)
    vpts = velocity_points(grid)
    # phase phi . v on the (phi..., v...) block
    phase = np.zeros(grid.mode_shape)
    for j in range(d):
        shape_phi = [1] * (2 * d)
        shape_phi[j] = grid.n_x
        shape_v = [1] * (2 * d)
        shape_v[d + j] = grid.n_v
        phase = phase + phi1.reshape(shape_phi) * vpts.reshape(shape_v)
    mixed = coeffs_to_samples(values, v_axes)
    tt = np.asarray(times).reshape((-1,) + (1,) * (2 * d))
    mixed = mixed * np.exp(sign * 1j * tt * phase[None])
    out = samples_to_coeffs(mixed, v_axes)
    still = np.asarray(times).reshape(-1) == 0.0
    out[still] = values[still]  # the shear is the identity at t = 0
    return out


def _band_overflow(values: np.ndarray, grid: PhaseGrid, times: np.ndarray, source: Frame) -> bool:
    """True when some slice carries content whose sheared frequency leaves the lattice."""
    phi, xi = mode_vectors(grid)
    nyq = math.pi * (grid.n_v // 2) / grid.half_len_v
    mag = np.abs(values)
    thresh = 1e-13 * max(float(mag.max(initial=0.0)), 1e-300)
    for n, t in enumerate(np.atleast_1d(times)):
        live = mag[n] > thresh
        if not live.any() or t == 0.0:
            continue
        # target-frame stored frequency after the shift
        moved = xi + t * phi if source is Frame.PHYSICAL else xi - t * phi
        if np.any(np.abs(moved[live]) > nyq + 1e-9):
            return True
    return False


def to_frame(f: SpectralField, target: Frame) -> SpectralField:
    """Re-express ``f`` in ``target`` frame by the exact trigonometric shear in v."""
    target = Frame(target)
    if f.frame is target:
        return f
    g = f.grid
    times = g.times()
    if _band_overflow(f.values, g, times, f.frame):
        warnings.warn(
            "frame change moves content beyond the v Nyquist band; result is aliased",
            AliasingWarning,
            stacklevel=2,
        )
    sign = 1.0 if target is Frame.GALILEAN else -1.0
    return SpectralField(_shear(f.values, g, times, sign), target, g)


def slice_to_frame(c: np.ndarray, grid: PhaseGrid, t: float, source: Frame, target: Frame) -> np.ndarray:
    """Frame change of a single mode array (shape ``grid.mode_shape``) at time ``t``."""
    source, target = Frame(source), Frame(target)
    if source is target:
        return np.asarray(c, dtype=np.complex128)
    sign = 1.0 if target is Frame.GALILEAN else -1.0
    return _shear(np.asarray(c, dtype=np.complex128)[None], grid, np.array([t]), sign)[0]


def rescale_field(f: SpectralField, delta: float, beta: float, amplitude: float = 1.0) -> SpectralField:
    """Exact kinetic rescaling by relabeling: the coefficient array is kept."""
    return SpectralField(f.values * amplitude, f.frame, f.grid.rescaled(delta, beta))
