import math

import numpy as np
import pytest

from dsc_lab.errors import (
    ConditioningError,
    ConfigError,
    DivergenceError,
    NumericalError,
    ShapeError,
)
from dsc_lab.numerics import (
    Box,
    IntegratorConfig,
    Trajectory,
    generalized_jacobian,
    induced_norm_2,
    integrate,
    jacobian_numeric,
    matrix_measure_2,
    matrix_measure_inf,
    sup_over_box,
    symmetric_eigenvalues,
)


# -- integrate -----------------------------------------------------------------


def test_zero_field_is_constant():
    cfg = IntegratorConfig(dt=0.1, t_final=1.0)
    tr = integrate(lambda t, x: np.zeros(1), [3.0], cfg)
    assert tr.channel("x").shape == (11, 1)
    assert np.all(tr.channel("x") == 3.0)


def test_exponential_decay_matches_closed_form():
    cfg = IntegratorConfig(dt=0.001, t_final=1.0)
    tr = integrate(lambda t, x: -x, [1.0], cfg)
    assert abs(tr.channel("x")[-1, 0] - math.exp(-1.0)) < 1e-9


def test_harmonic_oscillator_energy_drift():
    # conserved-quantity oracle: x1^2 + x2^2 is invariant for the true flow
    def field(t, x):
        return np.array([x[1], -x[0]])

    cfg = IntegratorConfig(dt=0.001, t_final=10.0)
    tr = integrate(field, [1.0, 0.0], cfg)
    energy = np.sum(tr.channel("x") ** 2, axis=1)
    assert np.max(np.abs(energy - 1.0)) < 1e-8


def test_rk4_order_ratio_on_decay():
    errs = []
    for dt in (0.01, 0.005):
        tr = integrate(lambda t, x: -x, [1.0], IntegratorConfig(dt=dt, t_final=1.0))
        errs.append(abs(tr.channel("x")[-1, 0] - math.exp(-1.0)))
    ratio = errs[0] / errs[1]
    assert 14.0 <= ratio <= 18.0


def test_euler_first_order():
    errs = []
    for dt in (0.01, 0.005):
        cfg = IntegratorConfig(dt=dt, t_final=1.0, method="euler")
        tr = integrate(lambda t, x: -x, [1.0], cfg)
        errs.append(abs(tr.channel("x")[-1, 0] - math.exp(-1.0)))
    assert 1.8 <= errs[0] / errs[1] <= 2.2


def test_integrate_includes_both_endpoints_and_times():
    cfg = IntegratorConfig(dt=0.25, t_final=1.0, t0=0.5)
    tr = integrate(lambda t, x: np.ones(1), [0.0], cfg)
    assert len(tr) == 3
    assert tr.times[0] == pytest.approx(0.5)
    assert tr.times[-1] == pytest.approx(1.0)


def test_integrate_determinism():
    def field(t, x):
        return np.array([math.sin(t) - x[0]])

    cfg = IntegratorConfig(dt=0.01, t_final=2.0)
    a = integrate(field, [0.3], cfg).channel("x")
    b = integrate(field, [0.3], cfg).channel("x")
    assert np.array_equal(a, b)


def test_divergence_error_carries_first_bad_time():
    # finite-time blowup of dx/dt = x^2
    with pytest.raises(DivergenceError) as info:
        integrate(lambda t, x: x * x, [5.0], IntegratorConfig(dt=0.01, t_final=2.0))
    assert 0.0 < info.value.time <= 2.0


def test_integrator_config_validation():
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=-0.1, t_final=1.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_final=0.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_final=1.0, method="rk45")
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.3, t_final=1.0)  # horizon off the step grid
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=1e-9, t_final=1.0, max_steps=1000)


def test_trajectory_channel_length_mismatch():
    with pytest.raises(ShapeError):
        Trajectory(0.0, 0.1, {"a": np.zeros(3), "b": np.zeros(4)})


# -- jacobian_numeric ----------------------------------------------------------


def test_jacobian_linear_field_exact():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4))
    jac = jacobian_numeric(lambda x: a @ x, rng.normal(size=4))
    assert np.max(np.abs(jac - a)) < 1e-9


def test_jacobian_hand_differentiated_example():
    def f(x):
        return np.array([x[0] ** 2, x[0] * x[1]])

    jac = jacobian_numeric(f, [1.0, 2.0], h=1e-5)
    assert np.max(np.abs(jac - np.array([[2.0, 0.0], [2.0, 1.0]]))) < 1e-8


def test_jacobian_constant_field_zero():
    jac = jacobian_numeric(lambda x: np.array([4.0, -1.0]), [0.2, 0.3])
    assert np.all(jac == 0.0)


def test_jacobian_nonfinite_names_coordinate():
    # perturbing coordinate 0 leaves x[1] = 0, so 1/x[1] blows up there first
    def f(x):
        return np.array([1.0 / x[1]])

    with pytest.raises(NumericalError, match="coordinate 0"):
        jacobian_numeric(f, [1.0, 0.0], h=1e-6)


# -- matrix measures -----------------------------------------------------------


def test_measure_inf_diagonal():
    assert matrix_measure_inf(np.diag([-1.0, -0.5])) == pytest.approx(-0.5)


def test_measure_inf_zero_matrix():
    assert matrix_measure_inf(np.zeros((3, 3))) == 0.0


def test_measure_inf_limit_definition_oracle():
    # ( ||I + h A||_inf - 1 ) / h at h = 1e-8
    rng = np.random.default_rng(42)
    a = rng.normal(size=(4, 4))
    h = 1e-8
    limit = (np.linalg.norm(np.eye(4) + h * a, np.inf) - 1.0) / h
    assert abs(matrix_measure_inf(a) - limit) < 1e-6


def test_measure_inf_rejects_nonsquare():
    with pytest.raises(ShapeError):
        matrix_measure_inf(np.zeros((2, 3)))


def test_measure_2_symmetric_diagonal():
    assert matrix_measure_2(np.diag([-5.0, -5.0, -5.0])) == pytest.approx(-5.0)


def test_measure_2_skew_is_zero():
    a = np.array([[0.0, 2.0], [-2.0, 0.0]])
    assert abs(matrix_measure_2(a)) < 1e-12


def test_jacobi_eigenvalues_match_numpy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = rng.normal(size=(5, 5))
        s = 0.5 * (s + s.T)
        ours = symmetric_eigenvalues(s)
        ref = np.sort(np.linalg.eigvalsh(s))
        assert np.max(np.abs(ours - ref)) < 1e-10


def _char_poly_real_parts(a: np.ndarray) -> np.ndarray:
    # characteristic-polynomial roots for n <= 3, coefficients by hand
    n = a.shape[0]
    if n == 2:
        coeffs = [1.0, -np.trace(a), np.linalg.det(a)]
    elif n == 3:
        tr = np.trace(a)
        m2 = (
            a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
            + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
            + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
        )
        coeffs = [1.0, -tr, m2, -np.linalg.det(a)]
    else:
        raise ValueError(n)
    return np.real(np.roots(coeffs))


def test_both_measures_upper_bound_eigenvalue_real_parts():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 4))
        a = rng.normal(size=(n, n)) - 2.0 * np.eye(n)
        max_re = float(np.max(_char_poly_real_parts(a)))
        assert matrix_measure_inf(a) >= max_re - 1e-9
        assert matrix_measure_2(a) >= max_re - 1e-9


def test_induced_norm_2_against_numpy():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(3, 4))
    assert induced_norm_2(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)


# -- generalized jacobian --------------------------------------------------------


def test_generalized_jacobian_identity_metric_is_identity_map():
    rng = np.random.default_rng(1)
    for _ in range(10):
        j = rng.normal(size=(4, 4))
        f = generalized_jacobian(np.eye(4), np.zeros((4, 4)), j)
        assert np.max(np.abs(f - j)) < 1e-12


def test_generalized_jacobian_scalar_metric():
    rng = np.random.default_rng(2)
    j = rng.normal(size=(3, 3))
    f = generalized_jacobian(2.0 * np.eye(3), np.zeros((3, 3)), j)
    assert np.max(np.abs(f - j)) < 1e-12


def test_generalized_jacobian_residual_oracle():
    rng = np.random.default_rng(4)
    theta = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    theta_dot = rng.normal(size=(3, 3))
    j = rng.normal(size=(3, 3))
    f = generalized_jacobian(theta, theta_dot, j)
    residual = f @ theta - (theta_dot + theta @ j)
    assert np.max(np.abs(residual)) < 1e-10


def test_generalized_jacobian_rejects_near_singular():
    theta = np.diag([1.0, 1e-15])
    with pytest.raises(ConditioningError):
        generalized_jacobian(theta, np.zeros((2, 2)), np.eye(2))


# -- boxes and suprema ------------------------------------------------------------


def test_sup_linear_coordinate():
    box = Box([-1.0], [1.0], 11)
    assert sup_over_box(lambda p: p[0], box, margin=1.0) == pytest.approx(1.0)


def test_sup_sine_dense_grid():
    box = Box([0.0], [math.pi], 101)
    assert sup_over_box(lambda p: math.sin(p[0]), box, margin=1.0) >= 0.9995


def test_sup_refinement_monotone_on_convex():
    box_coarse = Box([-1.0, -1.0], [1.0, 1.0], 5)
    box_fine = Box([-1.0, -1.0], [1.0, 1.0], 9)
    g = lambda p: abs(p[0]) + abs(p[1])
    assert sup_over_box(g, box_fine, 1.0) >= sup_over_box(g, box_coarse, 1.0)


def test_sup_monotone_in_box_inclusion():
    inner = Box([-0.5], [0.5], 5)
    outer = Box([-1.0], [1.0], 9)  # grid-aligned superset
    g = lambda p: p[0] ** 2
    assert sup_over_box(g, inner, 1.0) <= sup_over_box(g, outer, 1.0)


def test_sup_margin_scales():
    box = Box([-1.0], [1.0], 3)
    assert sup_over_box(lambda p: p[0], box, margin=1.1) == pytest.approx(1.1)


def test_sup_nonfinite_reports_coordinates():
    box = Box([0.0], [1.0], 3)
    with pytest.raises(NumericalError, match="grid point"):
        sup_over_box(lambda p: 1.0 / (p[0] - 0.5), box, margin=1.0)


def test_box_validation():
    with pytest.raises(ConfigError):
        Box([1.0], [0.0], 3)
    with pytest.raises(ConfigError):
        Box([0.0], [1.0], 1)
    with pytest.raises(ShapeError):
        Box([0.0, 1.0], [1.0], 3)


def test_box_concat():
    a = Box([0.0], [1.0], 3)
    b = Box([-1.0, -1.0], [1.0, 1.0], 3)
    c = a.concat(b)
    assert c.dim == 3
    with pytest.raises(ConfigError):
        a.concat(Box([0.0], [1.0], 5))
