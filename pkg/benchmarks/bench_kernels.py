"""Compare the compiled and pure-Python engine kernels.

    python benchmarks/bench_kernels.py [half_cycles]
"""

import math
import sys
import time

import numpy as np

from prism_forge import kernels


def inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    omega_x = np.full(n, math.radians(166.0) / 100e-6)
    extra_z = rng.normal(0.0, 200.0, n)
    amp = np.full(n, math.radians(18.0) / 100e-6)
    phase = np.zeros(n)
    return omega_x, extra_z, amp, phase, 100e-6, 100e-6, 400e-6, 8


def timeit(mod, args, mode, repeat=3):
    best = math.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = mod.run_engine(*args, mode, math.exp(-1 / 25), np.array([1.0, 0.0, 0.0]))
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(n=20_000):
    args = inputs(n)
    py = kernels.python_backend()
    cy = kernels.compiled_backend()
    print(f"half-cycles: {n}")
    for mode, name in ((kernels.GEOMETRIC, "geometric"), (kernels.DYNAMIC, "dynamic")):
        tp, (sp, _, _, _) = timeit(py, args, mode, repeat=1)
        line = f"{name:10s} python {tp * 1e3:9.1f} ms"
        if cy is not None:
            tc, (sc, _, _, _) = timeit(cy, args, mode)
            line += f"   cython {tc * 1e3:8.2f} ms   speed-up {tp / tc:6.1f}x" \
                    f"   max |diff| {np.max(np.abs(sp - sc)):.1e}"
        else:
            line += "   (compiled kernel not built)"
        print(line)


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20_000)
