"""Run every YAML config under configs/ and summarize exit codes."""

import argparse
import sys
from pathlib import Path

from kinfp.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(out_root: Path) -> int:
    worst = 0
    for cfg in sorted((ROOT / "configs").glob("*.yaml")):
        code = main(["--config", str(cfg), "--out", str(out_root / cfg.stem)])
        print(f"{cfg.stem:32s} exit {code}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results", help="parent directory for per-config outputs")
    sys.exit(run(Path(ap.parse_args().out)))
