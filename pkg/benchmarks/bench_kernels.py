"""Kernel throughput comparison: compiled extension vs pure-Python reference.

Both implementations are imported directly, bypassing the dispatch in
``relaxdg._kernels``, so this script works regardless of RELAXDG_PURE_PYTHON.

Usage:
    python benchmarks/bench_kernels.py [--n 4096] [--repeats 5]
"""

import argparse
import sys
import time

import numpy as np

from relaxdg import chem
from relaxdg._kernels import reference


def build_states(packed, n, seed=7):
    """Admissible complex states spanning the temperature and dilution range."""
    rows = []
    for T in np.linspace(400.0, 7000.0, 32):
        for rho_o in (1e-4, 1e-3, 0.01, 0.1):
            rows.append(chem.equilibrium_from_Tpv(packed, T, 1.3e6, 40.0, rho_o))
    eq = np.array(rows)
    rng = np.random.default_rng(seed)
    states = eq[rng.integers(0, len(eq), size=n)]
    # Mild perturbation keeps every lane admissible (T stays positive).
    states = states * (1.0 + 0.05 * rng.uniform(-1.0, 1.0, size=states.shape))
    return np.ascontiguousarray(states)


def best_time(fn, repeats):
    """Best-of-N wall time per call, auto-scaling the inner loop count."""
    number = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        dt = time.perf_counter() - t0
        if dt > 0.02:
            break
        number *= 4
    best = dt / number
    for _ in range(repeats - 1):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        dt = time.perf_counter() - t0
        best = min(best, dt / number)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="compare compiled and pure-Python kernel throughput")
    ap.add_argument("--n", type=int, default=4096, help="batch size (states)")
    ap.add_argument("--repeats", type=int, default=5, help="timing repeats")
    args = ap.parse_args(argv)

    try:
        from relaxdg._kernels import _core as core
    except ImportError:
        print("compiled extension not available; build the package first "
              "(pip install -e . --no-build-isolation)", file=sys.stderr)
        return 1

    packed = chem.ThermoTable().packed
    states = build_states(packed, args.n)
    simple = states @ np.array([[1.0, 1.0, 0.0, 0.0, 0.0],
                                [0.0, 0.0, 1.0, 0.0, 0.0],
                                [0.0, 0.0, 0.0, 1.0, 0.0],
                                [0.0, 0.0, 0.0, 0.0, 1.0]]).T
    simple = np.ascontiguousarray(simple)
    temps = np.linspace(300.0, 9000.0, args.n)

    cases = [
        ("primitive", (states, packed)),
        ("flux", (states, packed)),
        ("wave_speed", (states, packed)),
        ("forward_rate", (temps, packed)),
        ("source", (states, packed)),
        ("entropy", (states, packed)),
        ("entropy_grad", (states, packed)),
        ("affinity", (states, packed)),
        ("maxwellian", (simple, packed)),
    ]

    print(f"batch size {args.n}, best of {args.repeats} runs")
    print(f"{'kernel':<14} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for name, fargs in cases:
        py_fn = getattr(reference, name)
        c_fn = getattr(core, name)
        t_py = best_time(lambda: py_fn(*fargs), args.repeats)
        t_c = best_time(lambda: c_fn(*fargs), args.repeats)
        print(f"{name:<14} {t_py * 1e6:>10.1f}us {t_c * 1e6:>10.1f}us "
              f"{t_py / t_c:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
