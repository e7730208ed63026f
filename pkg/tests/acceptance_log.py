"""Collects one result line per acceptance criterion for the terminal summary."""
LINES: list[str] = []


def record(n: int, ok: bool, detail: str, seconds: float, limit: float) -> bool:
    ok = ok and seconds < limit
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail} | {seconds:.1f}s (limit {limit:.0f}s)"
    LINES.append(line)
    print(line)
    return ok
