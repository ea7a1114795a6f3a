"""Compare the compiled and pure-Python tracing backends.

    python benchmarks/bench_kernels.py [--repeat N]

Times single-ray traces, chief-ray solves and a short Monte Carlo run
under each backend and prints calls per second plus the speed-up.
"""

from __future__ import annotations

import argparse
import math
import timeit
from pathlib import Path

from haplobench import _kernels_py, kernels
from haplobench.bench import _wing_rows, assemble_nominal
from haplobench.tolerance import load_perturbation_spec, monte_carlo_tolerance

try:
    from haplobench import _kernels as _compiled
except ImportError:
    _compiled = None

SPEC = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "spec.toml"


def _use(mod):
    kernels.trace_path = mod.trace_path
    kernels.solve_chief = mod.solve_chief


def _cases(bench):
    rows = list(_wing_rows(bench.left))
    plane = [kernels.PLANE, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    start = (-0.25 - 0.032, 0.0, 0.106)
    spec = load_perturbation_spec(SPEC)
    return {
        "trace_path (4 surfaces)": (lambda: kernels.trace_path(rows, start, (1.0, 0.0, 0.0)), 2000),
        "solve_chief": (lambda: kernels.solve_chief(rows + [plane], start, (1.0, 0.0, 0.0), (0, 1.0, 0), (0, 0, 1.0)), 500),
        "monte_carlo (200 trials)": (lambda: monte_carlo_tolerance(bench, spec, 200, 1), 1),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    bench = assemble_nominal(0.064, 2.0, 2.0)
    backends = [("python", _kernels_py)] + ([("cython", _compiled)] if _compiled else [])
    if not _compiled:
        print("compiled extension not built; timing the pure-Python backend only")
    rates: dict[str, dict[str, float]] = {}
    for name, mod in backends:
        _use(mod)
        for label, (fn, number) in _cases(bench).items():
            best = min(timeit.repeat(fn, number=number, repeat=args.repeat))
            rates.setdefault(label, {})[name] = number / best
    print(f"{'case':28s} " + " ".join(f"{n:>14s}" for n, _ in backends) + ("    speed-up" if _compiled else ""))
    for label, r in rates.items():
        line = f"{label:28s} " + " ".join(f"{r[n]:12.1f}/s" for n, _ in backends)
        if _compiled:
            line += f"  {r['cython'] / r['python']:9.2f}x"
        print(line)
    assert all(math.isfinite(v) for r in rates.values() for v in r.values())


if __name__ == "__main__":
    main()
