import math

import numpy as np
import pytest

from dsc_lab.backstepping import TuningFunctions, z_jacobian
from dsc_lab.contraction import (
    _quasi_steady_alphas,
    contraction_rate_z,
    estimate_c2,
    estimate_c3,
    estimate_lipschitz,
    fast_bound,
    mu_star,
    observer_bound,
    steady_state_bound,
    verify_contraction,
)
from dsc_lab.errors import ConfigError, ShapeError
from dsc_lab.numerics import Box, induced_norm_2, jacobian_numeric
from dsc_lab.plant import StageExpr, StrictFeedbackSystem, dc_motor_system

MOTOR = dc_motor_system()
KC5 = TuningFunctions.linear(5.0, 3)


def linear_toy(kc=5.0):
    sys = StrictFeedbackSystem(
        n=2,
        f=(StageExpr.zero(), StageExpr.zero()),
        b=(StageExpr.const(1.0), StageExpr.const(1.0)),
    )
    return sys, TuningFunctions.linear(kc, 2)


# -- mu_star ---------------------------------------------------------------------


def test_mu_star_reference_value():
    assert mu_star(83.0) == 1.0 / 83.0


def test_mu_star_unit():
    assert mu_star(1.0) == 1.0


def test_mu_star_reciprocal_scaling():
    assert mu_star(2.0 * 7.0) == pytest.approx(mu_star(7.0) / 2.0)


def test_mu_star_domain():
    with pytest.raises(ConfigError):
        mu_star(0.0)
    with pytest.raises(ConfigError):
        mu_star(-3.0)


def test_mu_star_product_identity():
    for c2 in (0.3, 1.0, 83.0, 1234.5):
        assert mu_star(c2) * c2 == pytest.approx(1.0, abs=3e-16)


# -- c2 / c3 ---------------------------------------------------------------------


def test_c2_linear_toy_hand_value():
    # drift term Q = -kc (z2 + a): sensitivity to the fast variable is kc
    sys, tuning = linear_toy(kc=5.0)
    box_z = Box([-1.0, -1.0], [1.0, 1.0], 5)
    box_a = Box([-2.0], [2.0], 5)
    c2 = estimate_c2(sys, tuning, box_z, box_a, margin=1.0)
    assert c2 == pytest.approx(5.0, rel=0.02)


def test_c3_linear_toy_hand_value():
    # |Q| = kc |z2 + a| peaks at the aligned box corners
    sys, tuning = linear_toy(kc=5.0)
    box_z = Box([-1.0, -1.0], [1.0, 1.0], 5)
    box_a = Box([-2.0], [2.0], 5)
    c3 = estimate_c3(sys, tuning, box_z, box_a, margin=1.0)
    assert c3 == pytest.approx(5.0 * (1.0 + 2.0), rel=0.02)


def test_c2_point_box_equals_local_sensitivity():
    # singleton-ish grid: compare against an independent assembly of the
    # same object (difference Jacobian of the stack times the feedthrough)
    z0 = np.array([0.4, -0.3, 0.2])
    eps = 1e-9
    box_z = Box(z0, z0 + eps, 2)
    box_a = Box([-eps, -eps], [eps, eps], 2)
    c2 = estimate_c2(MOTOR, KC5, box_z, box_a, margin=1.0)

    dalpha = jacobian_numeric(
        lambda z: _quasi_steady_alphas(MOTOR, KC5, z)[0], z0, h=1e-5
    )
    feed = np.zeros((3, 2))
    feed[0, 0] = 1.0
    feed[1, 1] = 15.625
    assert c2 == pytest.approx(induced_norm_2(dalpha @ feed), rel=1e-3)


def test_c3_vanishes_on_equilibrium_slice():
    eps = 1e-9
    box_z = Box([-eps] * 3, [eps] * 3, 2)
    box_a = Box([-eps] * 2, [eps] * 2, 2)
    assert estimate_c3(MOTOR, KC5, box_z, box_a, margin=1.0) < 1e-6


def test_c3_monotone_in_box_inclusion():
    sys, tuning = linear_toy()
    small = estimate_c3(
        sys, tuning, Box([-0.5, -0.5], [0.5, 0.5], 5), Box([-1.0], [1.0], 5), margin=1.0
    )
    large = estimate_c3(
        sys, tuning, Box([-1.0, -1.0], [1.0, 1.0], 5), Box([-2.0], [2.0], 5), margin=1.0
    )
    assert small <= large


def test_c2_requires_matching_dims():
    with pytest.raises(ShapeError):
        estimate_c2(MOTOR, KC5, Box([-1.0], [1.0], 3), Box([-1.0, -1.0], [1.0, 1.0], 3))


def test_c2_independent_of_fast_variable_slice():
    # the drift is affine in the fast variable, so the sensitivity estimate
    # must not depend on where the fast-variable box sits
    box_z = Box([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0], 3)
    centered = estimate_c2(MOTOR, KC5, box_z, Box([-2.0, -2.0], [2.0, 2.0], 3), margin=1.0)
    shifted = estimate_c2(MOTOR, KC5, box_z, Box([5.0, 7.0], [9.0, 11.0], 3), margin=1.0)
    assert shifted == pytest.approx(centered, rel=1e-9)


def test_estimators_monotone_in_margin():
    sys, tuning = linear_toy()
    box_z = Box([-1.0, -1.0], [1.0, 1.0], 3)
    box_a = Box([-1.0], [1.0], 3)
    base_c2 = estimate_c2(sys, tuning, box_z, box_a, margin=1.0)
    base_c3 = estimate_c3(sys, tuning, box_z, box_a, margin=1.0)
    assert estimate_c2(sys, tuning, box_z, box_a, margin=1.2) == pytest.approx(
        1.2 * base_c2
    )
    assert estimate_c3(sys, tuning, box_z, box_a, margin=1.2) == pytest.approx(
        1.2 * base_c3
    )


# -- lipschitz ---------------------------------------------------------------------


def test_lipschitz_constant_map():
    box = Box([-1.0, -1.0], [1.0, 1.0], 5)
    assert estimate_lipschitz(lambda v: np.array([3.0, -2.0]), box, margin=1.0) == 0.0


def test_lipschitz_linear_diagonal_map():
    a = np.diag([4.0, -7.0, 2.0])
    box = Box([-1.0] * 3, [1.0] * 3, 4)
    est = estimate_lipschitz(lambda v: a @ v, box, margin=1.0)
    assert est == pytest.approx(np.linalg.norm(a, 2), rel=0.05)


def test_lipschitz_homogeneity():
    a = np.array([[1.0, 2.0], [0.5, -1.0]])
    box = Box([-1.0, -1.0], [1.0, 1.0], 4)
    one = estimate_lipschitz(lambda v: a @ v, box, margin=1.0)
    two = estimate_lipschitz(lambda v: 2.0 * (a @ v), box, margin=1.0)
    assert two == pytest.approx(2.0 * one, rel=1e-12)


# -- contraction rate --------------------------------------------------------------


def test_rate_linear_gains():
    box = Box([-1.0] * 3, [1.0] * 3, 3)
    assert contraction_rate_z(TuningFunctions.linear(5.0, 3), box) == 5.0
    assert contraction_rate_z(TuningFunctions.linear(40.0, 3), box) == 40.0


def test_rate_mixed_gains_takes_min():
    box = Box([-1.0] * 3, [1.0] * 3, 3)
    assert contraction_rate_z(TuningFunctions.linear([5.0, 7.0, 9.0], 3), box) == 5.0


# -- bounds -------------------------------------------------------------------------


def test_fast_bound_at_zero_time():
    fb = fast_bound(2.0, 0.1, 3.0, 1.0, 0.0)
    assert fb.offset_unscaled == pytest.approx(2.0 + 3.0)
    assert fb.offset_mu_scaled == pytest.approx(2.0 + 0.1 * 3.0)


def test_fast_bound_large_time_leaves_offset():
    fb = fast_bound(2.0, 0.1, 3.0, 1.0, 100.0)
    assert fb.offset_unscaled == pytest.approx(3.0)
    assert fb.offset_mu_scaled == pytest.approx(0.3)


def test_fast_bound_arithmetic_example():
    fb = fast_bound(1.0, 0.01, 30.0, 10.0, 0.05)
    assert fb.offset_unscaled == pytest.approx(math.exp(-5.0) + 30.0, abs=1e-6)


def test_fast_bound_domain():
    with pytest.raises(ConfigError):
        fast_bound(1.0, 0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        fast_bound(-1.0, 0.1, 1.0, 1.0, 0.0)


def test_ss_bound_arithmetic_example():
    # kappa = 0.5: |max(-1, -2)| = 1
    val = steady_state_bound(0.01, 1.0, 16.0, 30.0, 10.0, 40.0, 0.5)
    assert val == pytest.approx(0.12)


def test_ss_bound_linear_in_mu():
    a = steady_state_bound(0.02, 1.0, 16.0, 30.0, 10.0, 40.0, 2.0)
    b = steady_state_bound(0.01, 1.0, 16.0, 30.0, 10.0, 40.0, 2.0)
    assert a == pytest.approx(2.0 * b)


def test_ss_bound_kappa_unit_factor():
    a = steady_state_bound(0.01, 1.0, 16.0, 30.0, 10.0, 40.0, 1.0)
    assert a == pytest.approx(0.01 * 16.0 * 30.0 / 40.0)


def test_ss_bound_homogeneity():
    base = steady_state_bound(0.01, 1.0, 16.0, 30.0, 10.0, 40.0, 2.0)
    assert steady_state_bound(0.01, 1.0, 16.0, 60.0, 20.0, 40.0, 2.0) == pytest.approx(
        2.0 * base
    )
    assert steady_state_bound(0.01, 1.0, 16.0, 30.0, 10.0, 80.0, 2.0) == pytest.approx(
        base / 2.0
    )


def test_ss_bound_domain_errors():
    with pytest.raises(ConfigError):
        steady_state_bound(0.01, 1.0, 16.0, 30.0, 10.0, 0.0, 2.0)
    with pytest.raises(ConfigError):
        steady_state_bound(0.01, 1.0, 16.0, 30.0, 10.0, 40.0, 0.0)


def test_observer_bound_values():
    assert observer_bound(0.0, 50.0) == 0.0
    assert observer_bound(10.0, 50.0) == pytest.approx(0.2)
    assert observer_bound(10.0, 100.0) == pytest.approx(0.1)
    with pytest.raises(ConfigError):
        observer_bound(10.0, 0.0)


# -- certification -------------------------------------------------------------------


def test_verify_contraction_skew_baseline():
    box = Box([-2.0] * 3, [2.0] * 3, 3)
    for kc in (5.0, 40.0):
        tuning = TuningFunctions.linear(kc, 3)
        certified, worst = verify_contraction(
            lambda p, tn=tuning: z_jacobian(tn, [1.0, 15.625], p),
            np.eye(3),
            np.zeros((3, 3)),
            box,
        )
        assert certified
        assert worst == pytest.approx(-kc, abs=1e-9)


def test_verify_contraction_zero_field_not_certified():
    box = Box([-1.0] * 2, [1.0] * 2, 3)
    certified, worst = verify_contraction(
        lambda p: np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), box
    )
    assert not certified
    assert worst == 0.0


def test_verify_contraction_unstable_field():
    box = Box([-1.0] * 2, [1.0] * 2, 3)
    certified, worst = verify_contraction(
        lambda p: np.diag([1.0, -3.0]), np.eye(2), np.zeros((2, 2)), box
    )
    assert not certified
    assert worst == pytest.approx(1.0)
