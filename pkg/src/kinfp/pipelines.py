"""Command pipelines behind ``kinfp``; each writes its artifacts and a manifest."""

from __future__ import annotations

import dataclasses
import hashlib
import platform
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .bounds import (
    OPERATOR_BOUNDS, ConvergenceError, EstimateId, CSV_COLUMNS, estimate_comp_constants, operator_norm_scan,
    verify_equiv_ab, verify_k4, verify_kernel_integrals,
)
from .core import Frame, GridMismatchError, SourceDecomposition, SpectralField, rescale_field, to_frame
from .diagnostics import EMBEDDING_COLUMNS, DecompositionError, embedding_report
from .io import (
    EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_TOLERANCE, Command, ConfigError, FieldFileError, GeneratorSpec,
    RunConfig, generate_field, generate_source, read_field, write_csv, write_field,
)
from .kolmogorov import solve_cauchy, solve_forward, transport
from .norms import DegenerateModeError, Hdot_v, L2, slice_norms, slice_pairings
from .rough import LEDGER_COLUMNS, DiffusionForm, EllipticityError, LinearSolverError

KOLMOGOROV_ENERGY_COLUMNS = ("step", "t", "norm_sq", "dv_norm_sq", "work")
EMBEDDING_CSV_COLUMNS = ("sample", "delta") + EMBEDDING_COLUMNS
NUMERICAL_ERRORS = (ConvergenceError, LinearSolverError, EllipticityError, DegenerateModeError,
                    DecompositionError, FloatingPointError, np.linalg.LinAlgError)


@dataclasses.dataclass
class Outcome:
    files: list = dataclasses.field(default_factory=list)
    failures: list = dataclasses.field(default_factory=list)


def _r(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# builders


def random_coefficient(grid, lam: float, big_lambda: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric A(t_n, x, v) with eigenvalues uniform in [lam, big_lambda], one sample per step."""
    d = grid.dim
    lead = (grid.n_t,) + grid.mode_shape
    eig = rng.uniform(lam, big_lambda, lead + (d,))
    if d == 1:
        return eig[..., 0]
    q, _ = np.linalg.qr(rng.standard_normal(lead + (d, d)))
    return np.einsum("...ij,...j,...kj->...ik", q, eig, q)


def build_form(cfg: RunConfig, rng: np.random.Generator) -> DiffusionForm:
    spec = cfg.form
    if spec is None:
        raise ConfigError(f"{cfg.command.value} needs a 'form' section")
    lam, big = spec.lam, spec.big_lambda
    grid, beta = cfg.grid, cfg.params.beta
    if spec.kind == "fractional":
        return DiffusionForm.fractional(beta, lam, big, spec.c_shift)
    if spec.kind == "integral":
        mid, amp = 0.5 * (lam + big), 0.5 * (big - lam)
        if spec.kernel == "constant":
            def modulation(t, x, v, w):
                return np.full(np.broadcast_shapes(np.shape(x), np.shape(v), np.shape(w)), mid)
        else:
            def modulation(t, x, v, w):
                return mid + amp * np.cos(x) * np.cos(v) * np.cos(w)
        return DiffusionForm.integral_kernel(modulation, beta, lam, big, spec.c_shift)
    if spec.coefficient == "random":
        A = random_coefficient(grid, lam, big, rng)
    elif spec.coefficient == "constant":
        A = 0.5 * (lam + big) * np.broadcast_to(np.eye(grid.dim), grid.mode_shape + (grid.dim, grid.dim))
    else:
        if spec.coefficient_file is None:
            raise ConfigError("form.coefficient 'file' needs form.coefficient_file")
        fld, _ = read_field(spec.coefficient_file)
        if fld.grid != grid:
            raise ConfigError("coefficient file grid differs from the run grid")
        # payload holds real samples A(t_n, x, v) (d = 1); step n uses the sample at t_{n+1}
        A = np.ascontiguousarray(fld.values[1:].real)
    return DiffusionForm.matrix(A, lam, big, spec.c_shift)


def _source(cfg: RunConfig, seed: int):
    return None if cfg.source is None else generate_source(cfg.source, cfg.grid, seed)


def _initial(cfg: RunConfig, seed: int):
    return None if cfg.initial is None else generate_field(cfg.initial, cfg.grid, seed)


# ---------------------------------------------------------------------------
# pipelines


def _energy_rows(f: SpectralField, S: SourceDecomposition | None, params):
    sq = slice_norms(f, L2(), params).sq
    dv = slice_norms(f, Hdot_v(params.beta), params).sq
    work = np.zeros(len(sq))
    if S is not None:
        work = 2.0 * slice_pairings(to_frame(S.total(), f.frame), f).real
    for n, t in enumerate(f.grid.times()):
        yield {"step": str(n), "t": _r(t), "norm_sq": _r(sq[n]), "dv_norm_sq": _r(dv[n]), "work": _r(work[n])}


def _solve_kolmogorov(cfg, seed, out: Path) -> Outcome:
    S = _source(cfg, seed)
    grid = cfg.grid
    if cfg.command is Command.SOLVE_CAUCHY:
        psi = _initial(cfg, seed)
        if psi is None:
            psi = SpectralField.zeros(grid, Frame.PHYSICAL)
        f = solve_cauchy(psi, S, cfg.params)
    elif S is None:
        f = SpectralField.zeros(grid, Frame.PHYSICAL)
    else:
        f = solve_forward(S, cfg.params)
    write_field(out / "field.kfp", f, cfg.params)
    write_csv(out / "energy.csv", KOLMOGOROV_ENERGY_COLUMNS, _energy_rows(f, S, cfg.params))
    return Outcome(["field.kfp", "energy.csv"])


def _solve_rough(cfg, seed, out: Path) -> Outcome:
    from .rough import weak_solve

    rng = np.random.default_rng(seed)
    form = build_form(cfg, rng)
    S = _source(cfg, seed)
    psi = _initial(cfg, seed)
    f, ledger = weak_solve(form, S, psi, cfg.grid, splitting=cfg.form.splitting)
    res = Outcome()
    if cfg.command is Command.SOLVE_ROUGH:
        write_field(out / "field.kfp", f, cfg.params)
        res.files.append("field.kfp")
    write_csv(out / "ledger.csv", LEDGER_COLUMNS, ledger.rows())
    res.files.append("ledger.csv")
    worst = float(ledger.relative_residuals.max()) if ledger.dissipation.size else 0.0
    if worst > cfg.tolerances.energy_residual:
        res.failures.append(f"energy ledger residual {worst:.3e} > {cfg.tolerances.energy_residual:.1e}")
    return res


def _verify_kernel(cfg, seed, out: Path) -> Outcome:
    v, beta, dim = cfg.verify, cfg.params.beta, cfg.params.dim
    reports = []
    for name in v.estimates:
        eid = EstimateId(name)
        if eid is EstimateId.COMP:
            rep = estimate_comp_constants(beta, dim, v.n_samples, seed)
        elif eid in (EstimateId.K1, EstimateId.K2, EstimateId.K5, EstimateId.K6):
            rep = verify_kernel_integrals(eid, beta, dim, v.n_modes, alpha=v.alpha, eps=v.eps, seed=seed,
                                          window_factor=v.window_factor)
        elif eid is EstimateId.K4:
            rep = verify_k4(beta, dim, v.n_samples, eps=v.eps, seed=seed)
        elif eid is EstimateId.EQUIV_AB:
            rep = verify_equiv_ab(beta, v.n_samples, seed=seed)
        else:
            raise ConfigError(f"{name} is an operator bound; use VerifyOperatorNorms")
        reports.append(rep)
    write_csv(out / "bounds.csv", CSV_COLUMNS, (r.row() for r in reports))
    res = Outcome(["bounds.csv"])
    res.failures += [f"{r.estimate_id.value} invalid" for r in reports if not r.valid]
    return res


def _verify_operator_norms(cfg, seed, out: Path) -> Outcome:
    v, beta = cfg.verify, cfg.params.beta
    gammas = v.gammas if v.gammas is not None else (0.0, beta, 2.0 * beta)
    reports = []
    for gamma in gammas:
        for name in v.bounds:
            eid = EstimateId(name)
            if eid not in OPERATOR_BOUNDS:
                raise ConfigError(f"{name} is not an operator bound")
            reports.append(operator_norm_scan(eid, gamma, beta, v.n_modes, dim=cfg.params.dim,
                                              t_window=v.t_window, seed=seed))
    write_csv(out / "bounds.csv", CSV_COLUMNS, (r.row() for r in reports))
    res = Outcome(["bounds.csv"])
    for r in reports:
        if not r.valid or r.spread >= cfg.tolerances.spread_max:
            res.failures.append(f"{r.sampling_spec}: spread {r.spread:.3g}")
    return res


def _verify_embedding(cfg, seed, out: Path) -> Outcome:
    v, params, tol = cfg.verify, cfg.params, cfg.tolerances
    base = cfg.source or GeneratorSpec()
    base_seed = seed if base.seed is None else base.seed
    rows, res = [], Outcome()
    for k in range(v.n_sources):
        spec = dataclasses.replace(base, part="s1", frame="galilean", seed=base_seed + k)
        S = generate_source(spec, cfg.grid)
        f = solve_forward(S, params, frame=Frame.GALILEAN)
        rep = embedding_report(f, SourceDecomposition(s1=transport(f)), params,
                               residual_tol=tol.decomposition_residual, ceiling=tol.embedding_ceiling)
        rows.append({"sample": str(k), "delta": _r(1.0), **rep.row()})
        if rep.violation:
            res.failures.append(f"sample {k}: embedding ratio {rep.ratio:.4g} above ceiling")
        if rep.multiplicative_ratio > 1.0 + tol.multiplicative:
            res.failures.append(f"sample {k}: multiplicative ratio {rep.multiplicative_ratio:.6g}")
        for delta in v.deltas:
            fr = rescale_field(f, delta, params.beta)
            rr = embedding_report(fr, SourceDecomposition(s1=transport(fr)), params,
                                  residual_tol=tol.decomposition_residual, ceiling=tol.embedding_ceiling)
            rows.append({"sample": str(k), "delta": _r(delta), **rr.row()})
            if abs(rr.ratio - rep.ratio) > 1e-10 * abs(rep.ratio):
                res.failures.append(f"sample {k}: ratio changes under rescaling by {delta}")
    write_csv(out / "embedding.csv", EMBEDDING_CSV_COLUMNS, rows)
    res.files.append("embedding.csv")
    return res


PIPELINES = {
    Command.SOLVE_KOLMOGOROV: _solve_kolmogorov,
    Command.SOLVE_CAUCHY: _solve_kolmogorov,
    Command.SOLVE_ROUGH: _solve_rough,
    Command.ENERGY_REPORT: _solve_rough,
    Command.VERIFY_KERNEL: _verify_kernel,
    Command.VERIFY_OPERATOR_NORMS: _verify_operator_norms,
    Command.VERIFY_EMBEDDING: _verify_embedding,
}


# ---------------------------------------------------------------------------
# manifest and entry point


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: RunConfig, seed: int, threads, outcome: Outcome, status: int):
    manifest = {
        "command": cfg.command.value,
        "config": cfg.raw,
        "seed": seed,
        "threads": threads,
        "versions": {"kinfp": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "outputs": {name: _sha256(out / name) for name in outcome.files},
        "exit_status": status,
        "failures": outcome.failures,
    }
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=True))


def run(cfg: RunConfig, out, seed: int | None = None, threads: int | None = None, quiet: bool = False) -> int:
    """Execute ``cfg``; returns 0 ok, 2 config error, 3 numerical failure, 4 tolerance failure."""
    seed = cfg.seed if seed is None else seed
    if seed < 0:
        return EXIT_CONFIG
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outcome = Outcome()
    try:
        outcome = PIPELINES[cfg.command](cfg, seed, out)
        status = EXIT_TOLERANCE if outcome.failures else EXIT_OK
    except (ConfigError, FieldFileError, GridMismatchError) as exc:
        outcome.failures.append(f"config error: {exc}")
        status = EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        outcome.failures.append(f"numerical failure: {type(exc).__name__}: {exc}")
        status = EXIT_NUMERICAL
    write_manifest(out, cfg, seed, threads, outcome, status)
    if not quiet:
        for msg in outcome.failures:
            print(f"kinfp: {msg}")
    return status


__all__ = ["run", "PIPELINES", "build_form", "random_coefficient", "write_manifest", "Outcome",
           "KOLMOGOROV_ENERGY_COLUMNS", "EMBEDDING_CSV_COLUMNS"]
