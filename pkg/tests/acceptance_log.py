"""Collects one line per acceptance criterion for the terminal summary."""

LINES: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    LINES[n] = line
    print(line)
    return ok
