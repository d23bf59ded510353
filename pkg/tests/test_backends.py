"""Equivalence of the compiled kernel and the pure-Python fallback, plus the
plan-building dispatch rules."""

import math

import numpy as np
import pytest

from dsc_lab._core import (
    available_backends,
    backend_name,
    run_plan_on,
    try_build_backstepping_plan,
    try_build_dsc_plan,
)
from dsc_lab.backstepping import TuningFunctions, simulate_backstepping
from dsc_lab.dsc import DscConfig, simulate_dsc
from dsc_lab.numerics import IntegratorConfig
from dsc_lab.plant import (
    DisturbanceProfile,
    Ramp,
    ReferenceSignal,
    SignumOfState,
    Sinusoid,
    StageExpr,
    StrictFeedbackSystem,
    dc_motor_system,
)

MOTOR = dc_motor_system()
REF = ReferenceSignal(math.pi / 2.0, 8.0 * math.pi / 5.0)
KC5 = TuningFunctions.linear(5.0, 3)
X0 = [2.0 * math.pi, 0.0, 0.0]

needs_compiled = pytest.mark.skipif(
    "compiled" not in available_backends(), reason="extension not built"
)


def profile() -> DisturbanceProfile:
    return DisturbanceProfile(
        channels=(
            (SignumOfState(0.2, 1), Sinusoid(10.0, 2.0, 1.0), Ramp(10.0)),
            (Sinusoid(10.0, 2.0, 1.0 + math.pi / 2.0),),
        ),
        channel_map=(1, 2),
    )


def short_cfg() -> IntegratorConfig:
    return IntegratorConfig(dt=1e-4, t_final=0.05)


def test_plans_build_for_term_systems():
    assert try_build_backstepping_plan(MOTOR, REF, KC5, X0, short_cfg()) is not None
    cfg = DscConfig(mu=0.01, k=50.0, tuning=KC5)
    assert (
        try_build_dsc_plan(MOTOR, cfg, REF, profile(), X0, short_cfg()) is not None
    )


def test_plan_rejects_callable_stages():
    sys = StrictFeedbackSystem(
        n=1, f=(lambda x: 0.0,), b=(StageExpr.const(1.0),)
    )
    assert try_build_backstepping_plan(sys, REF, TuningFunctions.linear(5.0, 1), [0.0], short_cfg()) is None


def test_plan_rejects_nonlinear_tuning():
    cubic = TuningFunctions(
        [lambda z: z + z**3] * 3, [lambda z: 1.0 + 3.0 * z**2] * 3
    )
    assert try_build_backstepping_plan(MOTOR, REF, cubic, X0, short_cfg()) is None


@needs_compiled
def test_backends_agree_backstepping():
    plan = try_build_backstepping_plan(MOTOR, REF, KC5, X0, short_cfg())
    fast = run_plan_on(plan, "compiled")
    slow = run_plan_on(plan, "python")
    for key in ("x", "alpha", "u"):
        assert np.allclose(fast[key], slow[key], rtol=1e-12, atol=1e-12), key


@needs_compiled
def test_backends_agree_dsc():
    cfg = DscConfig(mu=0.01, k=50.0, tuning=KC5, observer_enabled=True)
    plan = try_build_dsc_plan(MOTOR, cfg, REF, profile(), X0, short_cfg())
    fast = run_plan_on(plan, "compiled")
    slow = run_plan_on(plan, "python")
    for key in ("x", "alpha", "alpha_f", "xi", "u"):
        assert np.allclose(fast[key], slow[key], rtol=1e-12, atol=1e-12), key


def test_generic_path_matches_kernel_path():
    # wrap the motor's term expressions in plain callables: same arithmetic,
    # but the packers must refuse it and use the object loop
    wrapped = StrictFeedbackSystem(
        n=3,
        f=tuple((lambda x, e=e: e(x)) for e in MOTOR.f),
        b=tuple((lambda x, e=e: e(x)) for e in MOTOR.b),
    )
    assert try_build_backstepping_plan(wrapped, REF, KC5, X0, short_cfg()) is None
    a = simulate_backstepping(wrapped, REF, KC5, X0, short_cfg())
    b = simulate_backstepping(MOTOR, REF, KC5, X0, short_cfg())
    assert np.allclose(a.channel("x"), b.channel("x"), rtol=1e-12, atol=1e-12)

    cfg = DscConfig(mu=0.01, k=50.0, tuning=KC5, observer_enabled=True)
    c = simulate_dsc(wrapped, cfg, REF, profile(), X0, short_cfg())
    d = simulate_dsc(MOTOR, cfg, REF, profile(), X0, short_cfg())
    assert np.allclose(c.channel("x"), d.channel("x"), rtol=1e-12, atol=1e-12)
    assert np.allclose(c.channel("u"), d.channel("u"), rtol=1e-12, atol=1e-12)


def test_backend_name_is_reported():
    assert backend_name() in ("compiled", "python")
    assert "python" in available_backends()


def _dev(a: dict, b: dict) -> float:
    return max(
        (float(np.max(np.abs(a[k] - b[k]))) for k in a if a[k].size), default=0.0
    )


@needs_compiled
def test_backends_agree_order_one_chain():
    from dsc_lab.plant import Constant

    sys = StrictFeedbackSystem(n=1, f=(StageExpr.zero(),), b=(StageExpr.const(1.0),))
    ref = ReferenceSignal(1.0, 2.0)
    tuning = TuningFunctions.linear(5.0, 1)
    cfg = IntegratorConfig(dt=1e-3, t_final=0.2)
    prof = DisturbanceProfile(channels=((Constant(2.0),),), channel_map=(0,))
    dcfg = DscConfig(mu=0.05, k=20.0, tuning=tuning)
    plan = try_build_dsc_plan(sys, dcfg, ref, prof, [1.0], cfg)
    assert _dev(run_plan_on(plan, "compiled"), run_plan_on(plan, "python")) < 1e-12
    plan2 = try_build_backstepping_plan(sys, ref, tuning, [1.0], cfg)
    assert _dev(run_plan_on(plan2, "compiled"), run_plan_on(plan2, "python")) < 1e-12


def test_plan_roundtrip_preserves_structure():
    from dsc_lab._core.plan import unpack_profile, unpack_reference, unpack_system

    cfg = DscConfig(mu=0.01, k=50.0, tuning=KC5)
    plan = try_build_dsc_plan(MOTOR, cfg, REF, profile(), X0, short_cfg())
    sys2 = unpack_system(plan)
    assert sys2.n == MOTOR.n
    for orig, back in zip(MOTOR.f + MOTOR.b, sys2.f + sys2.b):
        assert back.terms == orig.terms
    prof2 = unpack_profile(plan)
    assert prof2.channel_map == (1, 2)
    assert prof2.smooth_rate_bound() == profile().smooth_rate_bound()
    ref2 = unpack_reference(plan)
    assert ref2 == REF


@needs_compiled
def test_backends_agree_euler_method():
    cfg = IntegratorConfig(dt=1e-3, t_final=0.2, method="euler")
    plan = try_build_backstepping_plan(MOTOR, REF, KC5, [1.0, 0.0, 0.0], cfg)
    assert _dev(run_plan_on(plan, "compiled"), run_plan_on(plan, "python")) < 1e-12
    dcfg = DscConfig(mu=0.05, k=20.0, tuning=KC5)
    plan2 = try_build_dsc_plan(MOTOR, dcfg, REF, None, [1.0, 0.0, 0.0], cfg)
    assert _dev(run_plan_on(plan2, "compiled"), run_plan_on(plan2, "python")) < 1e-12
