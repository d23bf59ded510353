"""Pure-Python kernel: expands a plan back into evaluator objects and runs
the object-level loops. Functionally identical to the compiled extension,
roughly two orders of magnitude slower; selected automatically when the
extension is not built (see :mod:`dsc_lab._core`).
"""

from __future__ import annotations

from ..numerics import INTEGRATION_METHODS, IntegratorConfig
from .plan import SimPlan, unpack_profile, unpack_reference, unpack_system


def run_plan(plan: SimPlan) -> dict:
    from ..backstepping import TuningFunctions, _bs_loop
    from ..dsc import DscConfig, _dsc_loop

    sys = unpack_system(plan)
    ref = unpack_reference(plan)
    tuning = TuningFunctions.linear(plan.gains, plan.n)
    icfg = IntegratorConfig(
        dt=plan.dt,
        t_final=plan.t0 + plan.n_steps * plan.dt,
        t0=plan.t0,
        method=INTEGRATION_METHODS[plan.method],
    )
    if plan.controller == "backstepping":
        return _bs_loop(sys, ref, tuning, plan.x0, icfg)
    cfg = DscConfig(
        mu=plan.mu,
        k=plan.k_obs,
        tuning=tuning,
        observer_enabled=plan.observer_enabled,
    )
    return _dsc_loop(sys, cfg, ref, unpack_profile(plan), plan.x0, icfg)
