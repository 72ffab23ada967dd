"""Microseconds per RK4 step for the numba and numpy kernels.

    python3 benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]

Both backends propagate the same refrigerator model from the same state; the
script also reports the largest difference between their final states.
"""

import argparse
import time

import numpy as np

from qrefrig import _backend
from qrefrig.refrigerators import RefrigeratorConfig, build_refrigerator_I, build_refrigerator_II, initial_state_I, initial_state_II


def time_backend(model, rho0, steps, repeat, backend, dt=0.02, stride=10):
    gen = model.compile()
    gen.run(rho0, 0.0, dt, stride, stride, backend=backend)  # compile / warm up
    best = np.inf
    final = None
    for _ in range(repeat):
        start = time.perf_counter()
        final, _, _ = gen.run(rho0, 0.0, dt, steps, stride, backend=backend)
        best = min(best, time.perf_counter() - start)
    return 1e6 * best / steps, final


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    cfg = RefrigeratorConfig()
    cases = [
        ("refrigerator I (d=4)", *build_refrigerator_I(cfg)[:1], initial_state_I()),
        ("refrigerator II (d=8)", *build_refrigerator_II(cfg)[:1], initial_state_II(cfg)),
    ]
    backends = ["numpy"] + (["numba"] if _backend.HAVE_NUMBA else [])
    print(f"{'model':24s} {'backend':8s} {'us/step':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, model, rho0 in cases:
        results = {b: time_backend(model, rho0, args.steps, args.repeat, b) for b in backends}
        ref_us, ref_state = results["numpy"]
        for b in backends:
            us, state = results[b]
            diff = float(np.abs(state - ref_state).max())
            print(f"{name:24s} {b:8s} {us:10.2f} {ref_us / us:8.1f} {diff:11.1e}")


if __name__ == "__main__":
    main()
