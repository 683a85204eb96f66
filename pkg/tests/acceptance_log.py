"""Collects one line per acceptance criterion for the terminal summary."""
LINES = {}


def record(number, ok, detail):
    LINES[number] = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(LINES[number])
    return ok
