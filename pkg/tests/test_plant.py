import math

import numpy as np
import pytest

from dsc_lab.errors import ConfigError, GainFloorError, ShapeError
from dsc_lab.jets import Jet
from dsc_lab.numerics import jacobian_numeric
from dsc_lab.plant import (
    Constant,
    DcMotorParams,
    DisturbanceProfile,
    Ramp,
    ReferenceSignal,
    SignumOfState,
    Sinusoid,
    StageExpr,
    StageTerm,
    StrictFeedbackSystem,
    dc_motor_system,
    disturbance_eval,
    eval_dynamics,
    reference_derivs,
)

P = DcMotorParams()


def case_study_profile() -> DisturbanceProfile:
    return DisturbanceProfile(
        channels=(
            (SignumOfState(0.2, 1), Sinusoid(10.0, 2.0, 1.0), Ramp(10.0)),
            (Sinusoid(10.0, 2.0, 1.0 + math.pi / 2.0),),
        ),
        channel_map=(1, 2),
    )


# -- motor instance ------------------------------------------------------------


def test_motor_stage_gains():
    sys = dc_motor_system(P)
    x = np.zeros(3)
    assert sys.gain(0, x) == 1.0
    assert sys.gain(1, x) == pytest.approx(1.0 / 0.0640)  # 15.625
    assert sys.gain(2, x) == pytest.approx(40.0)


def test_motor_drift_hand_value():
    sys = dc_motor_system(P)
    # velocity-equation drift at angle pi/2, rate 1: -(N + B)/M
    x = np.array([math.pi / 2.0, 1.0, 0.0])
    assert sys.drift(1, x) == pytest.approx(-35.71875, abs=1e-9)


def test_motor_params_must_be_positive():
    with pytest.raises(ConfigError):
        DcMotorParams(L=0.0)


def test_eval_dynamics_equilibrium():
    sys = dc_motor_system(P)
    out = eval_dynamics(sys, np.zeros(3), 0.0)
    assert np.all(out == 0.0)


def test_eval_dynamics_gravity_term():
    sys = dc_motor_system(P)
    out = eval_dynamics(sys, np.array([math.pi / 2.0, 0.0, 0.0]), 0.0)
    assert out[1] == pytest.approx(-2.2816 / 0.0640, abs=1e-10)  # -35.65


def test_eval_dynamics_additive_disturbance():
    sys = dc_motor_system(P)
    x = np.array([0.3, -0.2, 0.7])
    base = eval_dynamics(sys, x, 1.5)
    shifted = eval_dynamics(sys, x, 1.5, d=np.array([1.0, 0.0, 0.0]))
    assert np.allclose(shifted - base, [1.0, 0.0, 0.0])


def test_eval_dynamics_affine_in_input():
    sys = dc_motor_system(P)
    x = np.array([0.1, 0.2, 0.3])
    delta = eval_dynamics(sys, x, 2.0) - eval_dynamics(sys, x, 1.0)
    assert delta[0] == 0.0 and delta[1] == 0.0
    assert delta[2] == pytest.approx(40.0)


def test_eval_dynamics_shape_checks():
    sys = dc_motor_system(P)
    with pytest.raises(ShapeError):
        eval_dynamics(sys, np.zeros(2), 0.0)
    with pytest.raises(ShapeError):
        eval_dynamics(sys, np.zeros(3), 0.0, d=np.zeros(2))


def test_drift_matches_numeric_jacobian():
    # analytic d(f2)/dx1 = -(N/M) cos(x1) cross-checked by central differences
    sys = dc_motor_system(P)
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = rng.uniform(-3.0, 3.0, size=3)
        jac = jacobian_numeric(lambda v: np.array([sys.drift(1, v)]), x)
        assert jac[0, 0] == pytest.approx(-(P.N / P.M) * math.cos(x[0]), abs=1e-6)
        assert jac[0, 1] == pytest.approx(-P.B / P.M, abs=1e-6)


def test_gain_floor_enforced():
    sys = StrictFeedbackSystem(
        n=1, f=(StageExpr.zero(),), b=(StageExpr.const(0.0),)
    )
    with pytest.raises(GainFloorError):
        sys.gain(0, np.zeros(1))


def test_stage_expr_respects_triangular_structure():
    with pytest.raises(ConfigError):
        StrictFeedbackSystem(
            n=2,
            f=(StageExpr(StageTerm(1.0, "lin", 1)), StageExpr.zero()),
            b=(StageExpr.const(1.0), StageExpr.const(1.0)),
        )


def test_stage_expr_evaluates_on_jets():
    expr = StageExpr(StageTerm(2.0, "sin", 0), StageTerm(-1.0, "lin", 1))
    x = [Jet([0.0, 1.0]), Jet([3.0, -2.0])]
    out = expr(x)
    assert out.c[0] == pytest.approx(-3.0)
    assert out.c[1] == pytest.approx(2.0 * 1.0 + 2.0)  # 2cos(0)*1 - (-2)


# -- disturbances ----------------------------------------------------------------


def test_case_study_values_at_t0():
    prof = case_study_profile()
    channels = disturbance_eval(prof, np.array([0.0, 1.0, 0.0]), 0.0)
    assert channels[0] == pytest.approx(0.2 + 10.0 * math.sin(1.0), abs=1e-12)
    assert channels[0] == pytest.approx(8.61471, abs=1e-5)
    assert channels[1] == pytest.approx(10.0 * math.cos(1.0), abs=1e-12)


def test_channel_two_is_state_independent_cosine():
    prof = case_study_profile()
    rng = np.random.default_rng(0)
    for t in np.linspace(0.0, 3.0, 17):
        x = rng.normal(size=3)
        assert disturbance_eval(prof, x, t)[1] == pytest.approx(
            10.0 * math.cos(2.0 * t + 1.0), abs=1e-12
        )


def test_signum_uses_zero_at_zero():
    prof = case_study_profile()
    plus = disturbance_eval(prof, np.array([0.0, 1.0, 0.0]), 0.0)[0]
    zero = disturbance_eval(prof, np.array([0.0, 0.0, 0.0]), 0.0)[0]
    minus = disturbance_eval(prof, np.array([0.0, -1.0, 0.0]), 0.0)[0]
    assert plus - zero == pytest.approx(0.2)
    assert zero - minus == pytest.approx(0.2)


def test_empty_profile_is_zero():
    prof = DisturbanceProfile()
    assert np.all(disturbance_eval(prof, np.zeros(3), 1.23) == 0.0)
    assert np.all(prof.state_disturbance(np.zeros(3), 1.23, 3) == 0.0)


def test_smooth_rate_bound_case_study():
    # channel 1 smooth part 10 sin(2t+1) + 10t has rate sup |20 cos + 10| = 30;
    # the signum term is excluded and reported separately
    prof = case_study_profile()
    assert prof.smooth_rate_bound() == pytest.approx(30.0)
    assert prof.signum_magnitude() == pytest.approx(0.2)


def test_state_disturbance_routing():
    prof = case_study_profile()
    d = prof.state_disturbance(np.array([0.0, 1.0, 0.0]), 0.0, 3)
    assert d[0] == 0.0
    assert d[1] == pytest.approx(0.2 + 10.0 * math.sin(1.0))
    assert d[2] == pytest.approx(10.0 * math.cos(1.0))


def test_profile_validation():
    with pytest.raises(ConfigError):
        DisturbanceProfile(channels=((Constant(1.0),),), channel_map=(0, 1))
    with pytest.raises(ConfigError):
        DisturbanceProfile(
            channels=((Constant(1.0),), (Constant(2.0),)), channel_map=(1, 1)
        )
    prof = DisturbanceProfile(channels=((Constant(1.0),),), channel_map=(5,))
    with pytest.raises(ConfigError):
        prof.state_disturbance(np.zeros(3), 0.0, 3)


def test_signum_index_out_of_range():
    prof = DisturbanceProfile(
        channels=((SignumOfState(1.0, 7),),), channel_map=(0,)
    )
    with pytest.raises(ConfigError):
        disturbance_eval(prof, np.zeros(3), 0.0)


# -- reference --------------------------------------------------------------------


REF = ReferenceSignal(amplitude=math.pi / 2.0, angular_frequency=8.0 * math.pi / 5.0)


def test_reference_at_zero():
    d = reference_derivs(REF, 0.0, 1)
    assert d[0] == pytest.approx(0.0, abs=1e-14)
    assert d[1] == pytest.approx((math.pi / 2.0) * (8.0 * math.pi / 5.0), abs=1e-12)
    assert d[1] == pytest.approx(7.8957, abs=1e-4)


def test_reference_quarter_period_peak():
    assert reference_derivs(REF, 5.0 / 16.0, 0)[0] == pytest.approx(math.pi / 2.0)


def test_reference_second_derivative_identity():
    w = REF.angular_frequency
    for t in np.linspace(0.0, 2.0, 23):
        d = reference_derivs(REF, t, 2)
        assert d[2] == pytest.approx(-(w**2) * d[0], abs=1e-9)


def test_reference_jet_matches_derivatives():
    t = 0.37
    j = REF.jet(t, 4)
    for k in range(5):
        assert j.c[k] * math.factorial(k) == pytest.approx(
            REF.derivative(t, k), abs=1e-12
        )


def test_reference_derivs_rejects_negative_order():
    with pytest.raises(ConfigError):
        reference_derivs(REF, 0.0, -1)
