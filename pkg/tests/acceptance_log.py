"""Verdict lines collected by the acceptance suite and echoed in the pytest summary."""

LINES: list[str] = []


def report(number: int, name: str, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    ok = ok and elapsed < budget
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} | {detail} | {elapsed:.1f}s of {budget:g}s"
    print(line)
    LINES.append(line)
    assert ok, line
