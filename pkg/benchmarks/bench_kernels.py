"""Benchmark the compiled stepping kernels against the NumPy fallback.

Run from the repository root after an editable install:

    python benchmarks/bench_kernels.py [--steps 20000] [--repeats 5]

Both backends execute the same recursions, so before timing the check
asserts trajectories agree to ~1e-12 (the scalar loops and the BLAS
matvecs round differently in the last bits).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from observer_pi import (
    ExcitationConfig,
    LuenbergerPolicy,
    PendulumParams,
    SystemModel,
    simulate_linear,
    simulate_pendulum,
)
from observer_pi._kernels import _simcore_py

PENDULUM = SystemModel(
    A=[[0.95, 0.1], [-0.98, 0.94]],
    B=[[0.005], [0.098]],
    C=[[0.0, 1.0]],
    sample_time=0.1,
)


def _time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=20000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    from observer_pi import _kernels

    if _kernels.BACKEND != "compiled":
        print("compiled backend not built; nothing to compare against")
        return

    policy = LuenbergerPolicy(L=[[0.05], [0.9]])
    exc = ExcitationConfig(noise_amplitude=0.1, seed=7)
    params = PendulumParams()
    x0 = np.array([3.0, 0.0])
    xh0 = np.zeros(2)

    cases = {
        "linear_loop": lambda: simulate_linear(
            PENDULUM, policy, exc, x0, xh0, args.steps
        ),
        "pendulum_loop": lambda: simulate_pendulum(
            params, PENDULUM, policy, exc, x0, xh0, args.steps
        ),
    }

    compiled = {"linear_loop": _kernels.linear_loop,
                "pendulum_loop": _kernels.pendulum_loop}
    print(f"steps={args.steps}, best of {args.repeats} repeats\n")
    print(f"{'kernel':<15}{'compiled':>12}{'python':>12}{'speedup':>10}")
    for name, run in cases.items():
        ref = run()
        # swap in the fallback and verify matching output
        _kernels.linear_loop = _simcore_py.linear_loop
        _kernels.pendulum_loop = _simcore_py.pendulum_loop
        try:
            alt = run()
            assert np.allclose(ref.xhat, alt.xhat, atol=1e-12), (
                f"{name}: backends differ"
            )
            t_py = _time(run, args.repeats)
        finally:
            _kernels.linear_loop = compiled["linear_loop"]
            _kernels.pendulum_loop = compiled["pendulum_loop"]
        t_c = _time(run, args.repeats)
        print(f"{name:<15}{t_c * 1e3:>10.2f}ms{t_py * 1e3:>10.2f}ms"
              f"{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
