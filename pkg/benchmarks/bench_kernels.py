"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once (so JIT compilation is excluded) and then timed
as the best of ``--repeat`` runs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from consensus_dispatch import kernels
from consensus_dispatch.graph import metropolis_weights, preset_graph
from consensus_dispatch.oracle import price_bracket
from consensus_dispatch.scenario import generate_scenario, parse_scenario


def best_time(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n_nodes: int):
    n_gen = max(1, n_nodes * 3 // 8)
    s, _, _ = parse_scenario(generate_scenario(0, n_gen, n_nodes - n_gen))
    a = s.arrays()
    g = preset_graph("ring", s.n_nodes)
    W = metropolis_weights(g)
    zero = np.zeros(s.n_nodes)
    lo, hi = price_bracket(s)
    ei, ej, ew = g.edge_arrays
    rows = np.random.default_rng(0).normal(size=(2000, s.n_nodes))

    def consensus(impl):
        return lambda: impl.matrix_consensus(W, a.is_gen, a.curv, a.icpt, a.cap, a.icpt.copy(),
                                             zero, zero, 0.005, 2000, 1e-12, 1e-12)

    def bisect(impl):
        return lambda: impl.bisect_zero_set(a.is_gen, a.curv, a.icpt, a.cap, lo, hi, 1e-12)

    def series(impl):
        return lambda: impl.potential_series(ei, ej, ew, rows)

    return {"matrix_consensus (2000 iters)": consensus, "bisect_zero_set": bisect,
            "potential_series (2000 rows)": series}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", default="16,64,256")
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<32}{'n':>6}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for n in (int(v) for v in args.sizes.split(",")):
        for name, make in cases(n).items():
            t_np = best_time(make(kernels.numpy_impl), args.repeat)
            t_nb = best_time(make(kernels.numba_impl), args.repeat)
            print(f"{name:<32}{n:>6}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
