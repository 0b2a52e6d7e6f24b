"""Timing comparison of the two kernel backends.

Runs the hot paths (batch expression evaluation and geodesic integration)
under both the compiled extension and the numpy fallback, and prints a
side-by-side table.  Usage:

    python benchmarks/bench_kernels.py [--repeat N]

The numbers are best-of-N wall times, so background noise biases them
upward only.  If the compiled extension is not importable the script still
runs and reports the fallback alone.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tansurf._kernels import compile_expressions, coordinate_slots, get_backend, pure
from tansurf.expr import parse

try:
    core = get_backend("c")
except ValueError:
    core = None


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def sphere_program():
    """Christoffel entries of the round sphere plus a few busier expressions,
    so the benchmark exercises the transcendental opcodes."""
    texts = [
        "0 - sin(x1) * cos(x1)",
        "cos(x1) / sin(x1)",
        "cos(x1) / sin(x1)",
        "exp(0 - x1^2) * sin(3 * x2)",
        "(x1 + x2)^3 / (1 + x1^2)",
    ]
    exprs = [parse(t, dim=2) for t in texts]
    return compile_expressions(exprs, coordinate_slots(2))


def polar_geodesic_args():
    exprs = [parse("0 - x1", dim=2), parse("1/x1", dim=2), parse("1/x1", dim=2)]
    prog = compile_expressions(exprs, coordinate_slots(2))
    lam = np.array([0, 1, 1], dtype=np.int64)
    mu = np.array([1, 0, 1], dtype=np.int64)
    nu = np.array([1, 1, 0], dtype=np.int64)
    return prog, lam, mu, nu


def bench_eval(repeat: int, n: int):
    prog = sphere_program()
    rng = np.random.default_rng(0)
    env = np.abs(rng.uniform(0.3, 2.8, size=(2, n)))
    rows = {}
    rows["python"] = best_of(lambda: pure.eval_program_batch(prog, env), repeat)
    if core is not None:
        rows["c"] = best_of(lambda: core.eval_program_batch(prog, env), repeat)
        a = np.asarray(pure.eval_program_batch(prog, env))
        b = np.asarray(core.eval_program_batch(prog, env))
        rows["agreement"] = float(np.max(np.abs(a - b)))
    return rows


def bench_geodesic_single(repeat: int, n_targets: int):
    prog, lam, mu, nu = polar_geodesic_args()
    x0 = np.array([1.0, 0.0])
    v0 = np.array([0.3, 1.0])
    targets = np.linspace(0.05, 1.5, n_targets)

    def run(impl):
        return lambda: impl.geodesic_path(prog, lam, mu, nu, 2, x0, v0, targets, 400, 1e6)

    rows = {"python": best_of(run(pure), repeat)}
    if core is not None:
        rows["c"] = best_of(run(core), repeat)
        pa = np.asarray(run(pure)()[0])
        pb = np.asarray(run(core)()[0])
        rows["agreement"] = float(np.max(np.abs(pa - pb)))
    return rows


def bench_geodesic_batch(repeat: int, n_batch: int, n_targets: int):
    prog, lam, mu, nu = polar_geodesic_args()
    rng = np.random.default_rng(1)
    X0 = np.column_stack([rng.uniform(0.5, 2.0, n_batch), rng.uniform(-1, 1, n_batch)])
    V0 = rng.uniform(-1, 1, (n_batch, 2))
    targets = np.linspace(0.1, 1.0, n_targets)

    def run(impl):
        return lambda: impl.geodesic_path_batch(prog, lam, mu, nu, 2, X0, V0, targets, 200, 1e6)

    rows = {"python": best_of(run(pure), repeat)}
    if core is not None:
        rows["c"] = best_of(run(core), repeat)
        pa = np.asarray(run(pure)()[0])
        pb = np.asarray(run(core)()[0])
        rows["agreement"] = float(np.nanmax(np.abs(pa - pb)))
    return rows


def print_row(label: str, rows: dict) -> None:
    py = rows["python"]
    if "c" in rows:
        ratio = py / rows["c"] if rows["c"] > 0 else float("inf")
        print(
            f"{label:<38} {py * 1e3:>10.3f} {rows['c'] * 1e3:>10.3f} "
            f"{ratio:>8.2f}x   (max diff {rows['agreement']:.1e})"
        )
    else:
        print(f"{label:<38} {py * 1e3:>10.3f} {'-':>10} {'-':>9}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7, help="best-of repetitions per case")
    args = ap.parse_args()

    active = get_backend().BACKEND_NAME
    print(f"active backend: {active}" + ("" if core is not None else " (compiled extension unavailable)"))
    print(f"{'case':<38} {'python ms':>10} {'c ms':>10} {'speedup':>9}")
    print("-" * 80)
    print_row("expression batch eval, n=1000", bench_eval(args.repeat, 1000))
    print_row("expression batch eval, n=100000", bench_eval(args.repeat, 100000))
    print_row("geodesic path, 1 ray x 16 targets", bench_geodesic_single(args.repeat, 16))
    print_row("geodesic batch, 256 rays x 8 targets", bench_geodesic_batch(args.repeat, 256, 8))
    print_row("geodesic batch, 1024 rays x 4 targets", bench_geodesic_batch(args.repeat, 1024, 4))


if __name__ == "__main__":
    main()
