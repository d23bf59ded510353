import math

import pytest

from dsc_lab import jets
from dsc_lab.jets import Jet


def taylor_of(fn, t0, order, h=1e-3):
    """Reference coefficients by high-order central differences (test oracle)."""
    import numpy as np

    coeffs = [fn(t0)]
    for k in range(1, order + 1):
        # k-th derivative via central differences of the (k-1)-th
        pts = np.arange(-4, 5)
        vals = np.array([fn(t0 + p * h) for p in pts])
        for _ in range(k):
            vals = np.gradient(vals, h)
        coeffs.append(vals[4] / math.factorial(k))
    return coeffs


def test_value_and_order():
    j = Jet([1.0, 2.0, 3.0])
    assert j.value == 1.0
    assert j.order == 2


def test_add_truncates_to_min_order():
    a = Jet([1.0, 2.0, 3.0])
    b = Jet([1.0, 1.0])
    assert (a + b).c == (2.0, 3.0)
    assert (a + 1.0).c == (2.0, 2.0, 3.0)
    assert (1.0 + a).c == (2.0, 2.0, 3.0)


def test_mul_is_truncated_convolution():
    a = Jet([1.0, 2.0])  # 1 + 2s
    b = Jet([3.0, 4.0])  # 3 + 4s
    assert (a * b).c == (3.0, 10.0)  # (1+2s)(3+4s) = 3 + 10s + 8s^2 -> truncated
    assert (2.0 * a).c == (2.0, 4.0)


def test_div_roundtrip():
    a = Jet([2.0, -1.0, 0.5, 0.3])
    b = Jet([1.5, 0.7, -0.2, 0.1])
    r = (a / b) * b
    for got, want in zip(r.c, a.c):
        assert got == pytest.approx(want, abs=1e-12)


def test_div_by_zero_leading_term():
    with pytest.raises(ZeroDivisionError):
        Jet([1.0, 1.0]) / Jet([0.0, 1.0])


def test_pow_small_integers():
    a = Jet([1.0, 1.0, 0.0])  # 1 + s
    assert (a**2).c == (1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        a ** (-1)
    with pytest.raises(ValueError):
        a**0.5


def test_derivative_shifts_and_scales():
    j = Jet([5.0, 1.0, 2.0, 3.0])  # 5 + s + 2s^2 + 3s^3
    assert j.derivative().c == (1.0, 4.0, 9.0)
    with pytest.raises(ValueError):
        Jet([1.0]).derivative()


def test_sin_jet_matches_series_of_sin_t():
    # jet of the identity u(t) = t0 + s
    t0 = 0.7
    u = Jet([t0, 1.0, 0.0, 0.0, 0.0])
    s = jets.sin(u)
    want = [
        math.sin(t0),
        math.cos(t0),
        -math.sin(t0) / 2.0,
        -math.cos(t0) / 6.0,
        math.sin(t0) / 24.0,
    ]
    for got, ref in zip(s.c, want):
        assert got == pytest.approx(ref, abs=1e-12)


def test_sin_cos_of_composite_argument():
    # u(t) = t^2 at t0 = 0.5; compare against the difference oracle
    t0 = 0.5
    u = Jet([t0 * t0, 2.0 * t0, 1.0, 0.0])
    got = jets.cos(u)
    ref = taylor_of(lambda t: math.cos(t * t), t0, 2)
    for k in range(3):
        assert got.c[k] == pytest.approx(ref[k], abs=1e-5)


def test_scalar_passthrough():
    assert jets.sin(0.3) == math.sin(0.3)
    assert jets.cos(0.3) == math.cos(0.3)
    assert jets.value_of(2.5) == 2.5
    assert jets.value_of(Jet([2.5, 1.0])) == 2.5


def test_constant_and_truncated():
    c = Jet.constant(4.0, 3)
    assert c.c == (4.0, 0.0, 0.0, 0.0)
    assert c.truncated(1).c == (4.0, 0.0)
    assert c.truncated(5) is c


def test_rsub_rdiv():
    a = Jet([2.0, 1.0])
    assert (3.0 - a).c == (1.0, -1.0)
    r = 1.0 / a
    assert r.c[0] == pytest.approx(0.5)
    assert r.c[1] == pytest.approx(-0.25)
