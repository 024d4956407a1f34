"""Collects acceptance sub-checks; conftest prints one line per criterion."""

import time
from collections import defaultdict

RESULTS = defaultdict(list)
TITLES = {
    "AC1": "exact algebra suite",
    "AC2": "grading suite",
    "AC3": "closed-form limits vs numeric BCH",
    "AC4": "driver suite",
    "AC5": "diffusion suite",
    "AC6": "tangent suite",
    "AC7": "Taylor remainder ratios",
    "AC8": "rescaled Green function vs tangent estimate",
    "AC9": "cone, capacity and Wiener suite",
    "AC10": "reproducibility",
}


def record(ac, name, ok, detail=""):
    RESULTS[ac].append((name, bool(ok), detail))
    line = f"[{'PASS' if ok else 'FAIL'}] {ac} {name}: {detail}"
    print(line)
    return bool(ok)


def lines():
    out = []
    for ac in sorted(RESULTS, key=lambda k: int(k[2:])):
        checks = RESULTS[ac]
        bad = [n for n, ok, _ in checks if not ok]
        tag = "FAIL" if bad else "PASS"
        info = "; ".join(f"{n}={d}" for n, _, d in checks if d)
        extra = f" failed: {', '.join(bad)}." if bad else ""
        out.append(f"[{tag}] {ac} {TITLES[ac]} ({len(checks)} checks).{extra} {info}")
    return out


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
