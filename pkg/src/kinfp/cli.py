"""Command-line front end: ``kinfp --config run.yaml --out results/``."""

from __future__ import annotations

import argparse
import os
import sys

THREAD_ENV = "KINFP_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _limit_threads(n: int | None):
    # only effective before numpy is first imported in this process
    if n:
        for var in _BLAS_VARS:
            os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinfp", description="Fractional kinetic Fokker-Planck solvers and bound checks.")
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", default=None, help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config 'seed')")
    p.add_argument("--threads", type=int, default=None, help=f"BLAS/OpenMP threads (or env {THREAD_ENV})")
    return p


def resolve_threads(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get(THREAD_ENV)
    return int(env) if env else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = resolve_threads(args.threads)
    except ValueError:
        print(f"kinfp: {THREAD_ENV} must be an integer", file=sys.stderr)
        return 2
    _limit_threads(threads)

    from .io import ConfigError, load_config
    from .pipelines import run

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"kinfp: config error: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.out
    if out is None:
        print("kinfp: config error: no output directory (use --out or 'out:')", file=sys.stderr)
        return 2
    return run(cfg, out, seed=args.seed, threads=threads)


if __name__ == "__main__":
    sys.exit(main())
