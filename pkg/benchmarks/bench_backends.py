#!/usr/bin/env python3
"""Benchmark the compiled kernel against the pure-Python fallback.

Runs the bench-motor closed loops (analytic baseline and filtered
controller) on every available backend, reports steps/second and the largest
channel deviation between backends.

    python benchmarks/bench_backends.py [--t-final 0.2] [--dt 1e-4] [--repeat 3]
"""

import argparse
import math
import time

import numpy as np

from dsc_lab._core import (
    available_backends,
    run_plan_on,
    try_build_backstepping_plan,
    try_build_dsc_plan,
)
from dsc_lab.backstepping import TuningFunctions
from dsc_lab.dsc import DscConfig
from dsc_lab.numerics import IntegratorConfig
from dsc_lab.plant import (
    DisturbanceProfile,
    Ramp,
    ReferenceSignal,
    SignumOfState,
    Sinusoid,
    dc_motor_system,
)


def build_plans(t_final: float, dt: float):
    sys = dc_motor_system()
    ref = ReferenceSignal(math.pi / 2.0, 8.0 * math.pi / 5.0)
    tuning = TuningFunctions.linear(5.0, 3)
    x0 = [2.0 * math.pi, 0.0, 0.0]
    cfg = IntegratorConfig(dt=dt, t_final=t_final)
    profile = DisturbanceProfile(
        channels=(
            (SignumOfState(0.2, 1), Sinusoid(10.0, 2.0, 1.0), Ramp(10.0)),
            (Sinusoid(10.0, 2.0, 1.0 + math.pi / 2.0),),
        ),
        channel_map=(1, 2),
    )
    dsc_cfg = DscConfig(mu=0.01, k=50.0, tuning=tuning, observer_enabled=True)
    return {
        "backstepping": try_build_backstepping_plan(sys, ref, tuning, x0, cfg),
        "dsc": try_build_dsc_plan(sys, dsc_cfg, ref, profile, x0, cfg),
    }


def best_time(plan, backend: str, repeat: int) -> tuple[float, dict]:
    best = math.inf
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = run_plan_on(plan, backend)
        best = min(best, time.perf_counter() - start)
    return best, out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--t-final", type=float, default=0.2)
    parser.add_argument("--dt", type=float, default=1e-4)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = available_backends()
    plans = build_plans(args.t_final, args.dt)
    steps = plans["dsc"].n_steps
    print(f"backends: {', '.join(backends)}; {steps} steps per run\n")
    print(f"{'loop':<14}{'backend':<10}{'best time':>12}{'steps/s':>14}")
    results: dict[tuple[str, str], dict] = {}
    times: dict[tuple[str, str], float] = {}
    for name, plan in plans.items():
        for backend in backends:
            elapsed, out = best_time(plan, backend, args.repeat)
            results[(name, backend)] = out
            times[(name, backend)] = elapsed
            print(f"{name:<14}{backend:<10}{elapsed:>12.4f}{steps / elapsed:>14,.0f}")
    if len(backends) == 2:
        print()
        for name in plans:
            speedup = times[(name, "python")] / times[(name, "compiled")]
            fast = results[(name, "compiled")]
            slow = results[(name, "python")]
            dev = max(
                float(np.max(np.abs(fast[key] - slow[key]))) for key in fast
            )
            print(f"{name}: compiled is {speedup:,.0f}x faster; "
                  f"max channel deviation {dev:.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
