"""Configuration, field files, source generators, CSV reports and the run pipeline."""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import (
    Frame,
    KineticParams,
    PhaseGrid,
    SourceDecomposition,
    SpectralField,
    effective_xi,
    is_hermitian,
    mode_vectors,
    position_points,
    samples_to_coeffs,
    velocity_points,
)

FIELD_MAGIC = "KINFP-FIELD"
FIELD_VERSION = 1
CSV_VERSION = "1"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_TOLERANCE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class FieldFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# field files


def write_field(path, f: SpectralField, params: KineticParams | None = None, hermitian: bool | None = None):
    """Text header line + JSON header line + little-endian (re, im) float64 payload."""
    if hermitian is None:
        hermitian = is_hermitian(f)
    header = {
        "version": FIELD_VERSION,
        "endianness": "little",
        "dtype": "complex128 as (re, im) float64 pairs",
        "order": "time, phi axes, xi axes (C order, FFT mode ordering)",
        "frame": f.frame.value,
        "hermitian": bool(hermitian),
        "grid": dataclasses.asdict(f.grid),
        "params": None if params is None else dataclasses.asdict(params),
        "shape": list(f.values.shape),
    }
    payload = np.ascontiguousarray(f.values, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(f"{FIELD_MAGIC} {FIELD_VERSION}\n".encode())
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(payload)


def read_field(path, hermitian_rtol: float = 1e-12) -> tuple[SpectralField, KineticParams | None]:
    with open(path, "rb") as fh:
        magic = fh.readline().decode().split()
        if len(magic) != 2 or magic[0] != FIELD_MAGIC:
            raise FieldFileError(f"{path}: not a field file")
        if int(magic[1]) != FIELD_VERSION:
            raise FieldFileError(f"{path}: unsupported version {magic[1]}")
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    if header.get("endianness") != "little":
        raise FieldFileError("only little-endian payloads are supported")
    grid = PhaseGrid(**header["grid"])
    shape = tuple(header["shape"])
    if shape != grid.field_shape:
        raise FieldFileError("header shape disagrees with the grid")
    expected = int(np.prod(shape)) * 16
    if len(payload) != expected:
        raise FieldFileError(f"payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<c16").reshape(shape).astype(np.complex128)
    f = SpectralField(values, Frame(header["frame"]), grid)
    if header.get("hermitian") and not is_hermitian(f, hermitian_rtol):
        raise FieldFileError("header declares Hermitian symmetry but the payload violates it")
    params = KineticParams(**header["params"]) if header.get("params") else None
    return f, params


# ---------------------------------------------------------------------------
# CSV


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_csv(path, columns, rows):
    Path(path).write_text(f"# kinfp-csv v{CSV_VERSION}\n" + csv_text(columns, rows))


# ---------------------------------------------------------------------------
# generators


GENERATORS = ("single-mode", "random-band-limited", "gaussian-bump-modes", "gaussian-packet", "zero")


@dataclass(frozen=True)
class GeneratorSpec:
    generator: str = "random-band-limited"
    part: str = "s1"
    frame: str = "galilean"
    amplitude: float = 1.0
    band: tuple = (1.0, 8.0)
    phi: tuple = (1.0,)
    xi: tuple = (2.0,)
    width: float = 1.0
    envelope: str = "bump"
    t_on: float | None = None
    seed: int | None = None
    file: str | None = None

    def __post_init__(self):
        if self.file is None and self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; choose from {GENERATORS}")
        if self.part not in ("s1", "s2", "s3"):
            raise ConfigError("part must be s1, s2 or s3")
        if self.envelope not in ("bump", "constant"):
            raise ConfigError("envelope must be 'bump' or 'constant'")
        if self.frame not in {f.value for f in Frame}:
            raise ConfigError(f"unknown frame {self.frame!r}")
        lo, hi = self.band
        if not 0 < lo < hi:
            raise ConfigError("band must satisfy 0 < lo < hi")


def _band_taper(r: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Smooth bump supported on (lo, hi), equal to 1 at the centre."""
    y = (2.0 * r - lo - hi) / (hi - lo)
    out = np.zeros_like(r, dtype=float)
    inside = np.abs(y) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - y[inside] ** 2))
    return out


def time_envelope(times: np.ndarray, t_start: float, t_end: float, kind: str = "bump") -> np.ndarray:
    """Smooth bump vanishing with all derivatives at both ends, or a constant 1 on [t_start, t_end]."""
    times = np.asarray(times, float)
    inside = (times >= t_start) & (times <= t_end)
    if kind == "constant":
        return inside.astype(float)
    tau = (times - t_start) / (t_end - t_start)
    out = np.zeros_like(times)
    m = (tau > 0) & (tau < 1)
    out[m] = np.exp(4.0 - 1.0 / (tau[m] * (1.0 - tau[m])))
    return out


def _lattice_index(value: float, n: int, half_len: float) -> int:
    k = value * half_len / math.pi
    ki = int(round(k))
    if abs(k - ki) > 1e-9 or not -n // 2 <= ki < n // 2:
        raise ConfigError(f"{value} is not on the lattice of {n} modes with half-length {half_len}")
    return ki % n


def _drop_nyquist(c: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    c = c.copy()
    for ax in range(1, c.ndim):
        idx = [slice(None)] * c.ndim
        idx[ax] = c.shape[ax] // 2
        c[tuple(idx)] = 0.0
    return c


def _hermitian_part(c: np.ndarray) -> np.ndarray:
    flipped = c
    for ax in range(1, c.ndim):
        n = c.shape[ax]
        flipped = np.take(flipped, (-np.arange(n)) % n, axis=ax)
    return 0.5 * (c + np.conj(flipped))


def generate_field(spec: GeneratorSpec, grid: PhaseGrid, seed: int = 0) -> SpectralField:
    """Deterministic field on ``grid`` in ``spec.frame``."""
    frame = Frame(spec.frame)
    if spec.file is not None:
        from_file, _ = read_field(spec.file)
        if from_file.grid != grid:
            raise ConfigError(f"{spec.file}: grid differs from the run grid")
        return from_file
    times = grid.times()
    t_on = grid.t_start if spec.t_on is None else spec.t_on
    env = time_envelope(times, t_on, grid.t_end, spec.envelope)
    shape = (-1,) + (1,) * (2 * grid.dim)
    out = np.zeros(grid.field_shape, dtype=np.complex128)
    g = spec.generator
    if g == "zero":
        return SpectralField(out, frame, grid)
    if g == "single-mode":
        d = grid.dim
        phi = tuple(spec.phi) + (0.0,) * (d - len(spec.phi))
        xi = tuple(spec.xi) + (0.0,) * (d - len(spec.xi))
        idx = tuple(_lattice_index(p, grid.n_x, grid.half_len_x) for p in phi[:d])
        idx += tuple(_lattice_index(x, grid.n_v, grid.half_len_v) for x in xi[:d])
        out[(slice(None),) + idx] = spec.amplitude * env
        return SpectralField(out, frame, grid)
    if g == "gaussian-packet":
        # exp(-|v|^2 / (2 w^2)) (1 + sum_j cos(phi_j x_1)) sampled in (x, v), physical frame
        x = position_points(grid)
        v = velocity_points(grid)
        d = grid.dim
        mesh = np.meshgrid(*([x] * d + [v] * d), indexing="ij")
        vv = sum(m**2 for m in mesh[d:])
        modulation = 1.0 + sum(0.5 * np.cos(p * mesh[0]) for p in spec.phi)
        samples = spec.amplitude * np.exp(-vv / (2.0 * spec.width**2)) * modulation
        c = samples_to_coeffs(samples.astype(np.complex128), grid.x_axes + grid.v_axes)
        out[:] = c[None] * env.reshape(shape)
        f = SpectralField(out, Frame.PHYSICAL, grid)
        from .core import to_frame

        return to_frame(f, frame)

    phi_v, _ = mode_vectors(grid)
    aphi = np.sqrt(np.sum(phi_v**2, axis=-1))
    lo, hi = spec.band
    rng = np.random.default_rng(seed if spec.seed is None else spec.seed)
    if g == "random-band-limited":
        a = rng.standard_normal(grid.mode_shape) + 1j * rng.standard_normal(grid.mode_shape)
        b = rng.standard_normal(grid.mode_shape) + 1j * rng.standard_normal(grid.mode_shape)
        a = _hermitian_part(a[None])[0]
        b = _hermitian_part(b[None])[0]
    tmid = 0.5 * (grid.t_start + grid.t_end)
    span = grid.t_end - grid.t_start
    for n, t in enumerate(times):
        if env[n] == 0:
            continue
        xe = effective_xi(grid, frame, t)
        axi = np.sqrt(np.sum(xe**2, axis=-1))
        taper = _band_taper(axi, lo, hi) * _band_taper(aphi, lo, hi)
        if g == "random-band-limited":
            c = a + b * ((t - tmid) / span)
        else:  # gaussian-bump-modes
            p0 = np.zeros(grid.dim)
            x0 = np.zeros(grid.dim)
            p0[: len(spec.phi)] = spec.phi[: grid.dim]
            x0[: len(spec.xi)] = spec.xi[: grid.dim]
            w2 = 2.0 * spec.width**2
            c = sum(
                np.exp(-(np.sum((phi_v - s * p0) ** 2, axis=-1) + np.sum((xe - s * x0) ** 2, axis=-1)) / w2)
                for s in (1.0, -1.0)
            )
        out[n] = spec.amplitude * env[n] * taper * c
    return SpectralField(_drop_nyquist(out, grid), frame, grid)


def generate_source(spec: GeneratorSpec, grid: PhaseGrid, seed: int = 0) -> SourceDecomposition:
    return SourceDecomposition(**{spec.part: generate_field(spec, grid, seed)})


# ---------------------------------------------------------------------------
# configuration


class Command(enum.Enum):
    SOLVE_KOLMOGOROV = "SolveKolmogorov"
    SOLVE_CAUCHY = "SolveCauchy"
    SOLVE_ROUGH = "SolveRough"
    VERIFY_KERNEL = "VerifyKernel"
    VERIFY_OPERATOR_NORMS = "VerifyOperatorNorms"
    VERIFY_EMBEDDING = "VerifyEmbedding"
    ENERGY_REPORT = "EnergyReport"


@dataclass(frozen=True)
class FormSpec:
    kind: str = "fractional"
    lam: float = 1.0
    big_lambda: float = 1.0
    coefficient: str = "random"  # random | constant | file
    coefficient_file: str | None = None
    kernel: str = "constant"  # constant | oscillating
    c_shift: float = 0.0
    splitting: str = "lie"

    def __post_init__(self):
        if self.splitting not in ("lie", "strang"):
            raise ConfigError("form.splitting must be lie or strang")
        if self.kind not in ("matrix", "fractional", "integral"):
            raise ConfigError("form.kind must be matrix, fractional or integral")
        if self.coefficient not in ("random", "constant", "file"):
            raise ConfigError("form.coefficient must be random, constant or file")
        if self.kernel not in ("constant", "oscillating"):
            raise ConfigError("form.kernel must be constant or oscillating")


@dataclass(frozen=True)
class VerifySpec:
    n_samples: int = 1000
    n_modes: int = 200
    estimates: tuple = ("Comp", "K1", "K2", "K4", "K5", "K6", "EquivAB")
    bounds: tuple = ("T_L2L2", "T_L1L2", "T_L2C0", "T_L1C0")
    gammas: tuple | None = None
    t_window: float = 2.0
    window_factor: float = 1.0
    alpha: float = 1.0
    eps: float = 0.5
    n_sources: int = 1
    deltas: tuple = (0.5, 2.0)

    def __post_init__(self):
        from .bounds import EstimateId

        for name in tuple(self.estimates) + tuple(self.bounds):
            try:
                EstimateId(name)
            except ValueError:
                raise ConfigError(f"unknown estimate id {name!r}") from None
        if self.n_samples < 1 or self.n_modes < 1 or self.n_sources < 0:
            raise ConfigError("sample counts must be positive")


@dataclass(frozen=True)
class Tolerances:
    energy_residual: float = 1e-10
    spread_max: float = 10.0
    embedding_ceiling: float | None = None
    multiplicative: float = 1e-6
    decomposition_residual: float = 1e-8


@dataclass(frozen=True)
class RunConfig:
    command: Command
    params: KineticParams
    grid: PhaseGrid
    form: FormSpec | None = None
    source: GeneratorSpec | None = None
    initial: GeneratorSpec | None = None
    verify: VerifySpec = field(default_factory=VerifySpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    out: str | None = None
    raw: dict = field(default_factory=dict, compare=False)


def _build(cls, data, where: str):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_TOP_KEYS = {"command", "params", "grid", "form", "source", "initial", "verify", "tolerances", "seed", "out"}
_PARAM_KEYS = {"beta": "beta", "dim": "dim", "lambda": "lam", "lam": "lam", "big_lambda": "big_lambda"}


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for key in ("command", "params", "grid"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    try:
        command = Command(data["command"])
    except ValueError:
        raise ConfigError(f"unknown command {data['command']!r}") from None
    p = data["params"]
    if not isinstance(p, dict) or set(p) - set(_PARAM_KEYS):
        raise ConfigError(f"params: unknown keys {sorted(set(p) - set(_PARAM_KEYS)) if isinstance(p, dict) else p}")
    try:
        params = KineticParams(**{_PARAM_KEYS[k]: v for k, v in p.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"params: {exc}") from exc
    grid_data = dict(data["grid"]) if isinstance(data["grid"], dict) else data["grid"]
    if isinstance(grid_data, dict):
        grid_data.setdefault("dim", params.dim)
    grid = _build(PhaseGrid, grid_data, "grid")
    if grid.dim != params.dim:
        raise ConfigError("grid.dim must equal params.dim")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return RunConfig(
        command=command,
        params=params,
        grid=grid,
        form=_build(FormSpec, data.get("form"), "form"),
        source=_build(GeneratorSpec, data.get("source"), "source"),
        initial=_build(GeneratorSpec, data.get("initial"), "initial"),
        verify=_build(VerifySpec, data.get("verify"), "verify") or VerifySpec(),
        tolerances=_build(Tolerances, data.get("tolerances"), "tolerances") or Tolerances(),
        seed=seed,
        out=data.get("out"),
        raw=data,
    )


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(data)


__all__ = [
    "ConfigError", "FieldFileError", "write_field", "read_field", "write_csv", "csv_text",
    "GeneratorSpec", "generate_field", "generate_source", "time_envelope", "Command", "FormSpec",
    "VerifySpec", "Tolerances", "RunConfig", "parse_config", "load_config",
    "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICAL", "EXIT_TOLERANCE",
]
