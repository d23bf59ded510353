"""Recursive virtual-control synthesis and the exact baseline control law.

Each virtual control is

    alpha_1 = x_d(t)
    alpha_i = (1/b_{i-1}) [ -f_{i-1} - chi_{i-1}(z_{i-1}) - b_{i-2} z_{i-2}
                            + d(alpha_{i-1})/dt ],    z_i = x_i - alpha_i,

and the input closes the top stage the same way. The time derivatives are
propagated exactly by evaluating the whole recursion in truncated Taylor
jets along the disturbance-free flow: every partial derivative of every
stage expression is accumulated by the chain rule, with no symbolic algebra
and no finite differencing. This is the full analytic-differentiation cost
that the filtered controller in :mod:`dsc_lab.dsc` avoids.

The closed loop in error coordinates is the tridiagonal skew-coupled form

    dz_1 = -chi_1(z_1) + b_1 z_2
    dz_i = -b_{i-1} z_{i-1} - chi_i(z_i) + b_i z_{i+1}
    dz_n = -b_{n-1} z_{n-1} - chi_n(z_n)

whose symmetric part is -diag(chi_i'), the contraction baseline used by the
tuning-bound estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import ConfigError, DivergenceError, ShapeError
from .numerics import _STEPPERS, IntegratorConfig, Trajectory
from .plant import (
    ReferenceSignal,
    StrictFeedbackSystem,
    eval_dynamics,
    reference_derivs,
)

Array = np.ndarray


class TuningFunctions:
    """Per-stage feedback shaping maps chi_i with analytic slopes chi_i'.

    Stage maps must vanish at zero and have strictly positive slope; this is
    spot-checked at construction. The default linear family chi_i(z) = kc*z
    is the one the simulation kernels can compile.
    """

    def __init__(self, chis, chi_primes, linear_gains=None):
        if len(chis) != len(chi_primes):
            raise ConfigError("need one slope map per stage map")
        if not chis:
            raise ConfigError("at least one stage is required")
        self._chis = tuple(chis)
        self._chi_primes = tuple(chi_primes)
        self.linear_gains = (
            tuple(float(g) for g in linear_gains) if linear_gains else None
        )
        for i, (chi, slope) in enumerate(zip(self._chis, self._chi_primes)):
            if abs(chi(0.0)) > 1e-12:
                raise ConfigError(f"stage {i + 1} map must vanish at zero")
            for probe in (-1.0, 0.0, 1.0):
                if not slope(probe) > 0.0:
                    raise ConfigError(
                        f"stage {i + 1} slope must stay positive "
                        f"(got {slope(probe)} at z={probe})"
                    )

    @classmethod
    def linear(cls, gain, n: int) -> "TuningFunctions":
        """Linear tuning chi_i(z) = g_i * z; ``gain`` is a scalar or one per stage."""
        gains = [float(gain)] * n if np.isscalar(gain) else [float(g) for g in gain]
        if len(gains) != n:
            raise ConfigError(f"need {n} gains, got {len(gains)}")
        for g in gains:
            if not g > 0.0:
                raise ConfigError(f"tuning gains must be positive, got {g}")
        chis = [(lambda z, g=g: g * z) for g in gains]
        primes = [(lambda z, g=g: g) for g in gains]
        return cls(chis, primes, linear_gains=gains)

    @property
    def n(self) -> int:
        return len(self._chis)

    def chi(self, i: int, z):
        return self._chis[i](z)

    def chi_prime(self, i: int, z) -> float:
        return float(self._chi_primes[i](z))


@dataclass(frozen=True)
class VirtualControlStack:
    """Values of alpha_1..alpha_n, their exact time derivatives, and z."""

    alphas: Array
    alpha_dots: Array
    z: Array


def _state_flow_jets(sys: StrictFeedbackSystem, x) -> list[jets.Jet]:
    """Taylor jets of each coordinate along the input-free chain prefix.

    Coordinate j (0-based) carries n-1-j derivative coefficients, filled
    iteratively from the first n-1 stage equations; the top equation, which
    involves the input, is never differentiated. The triangular structure
    guarantees every coefficient read below is already valid.
    """
    n = sys.n
    coeffs: list[list[float]] = [[float(xj)] for xj in x]
    for m in range(1, n):
        prefix = [jets.Jet(tuple(coeffs[k][:m])) for k in range(n)]
        for j in range(n - m):
            rhs = sys.drift(j, prefix) + sys.gain(j, prefix) * prefix[j + 1]
            coeffs[j].append(rhs.c[m - 1] / m)
    return [jets.Jet(tuple(cs)) for cs in coeffs]


def _alpha_stack(sys: StrictFeedbackSystem, x, ref_jet: jets.Jet, tuning: TuningFunctions):
    """Jets of every virtual control; mixed-order truncation keeps each
    alpha_s usable down to its first derivative."""
    n = sys.n
    if tuning.n != n:
        raise ConfigError(
            f"tuning defines {tuning.n} stages but the system has {n}"
        )
    if ref_jet.order < n:
        raise ConfigError(
            f"reference jet must carry at least {n} derivatives, "
            f"got {ref_jet.order}"
        )
    xj = _state_flow_jets(sys, x)
    alphas = [ref_jet]
    zs = [xj[0] - ref_jet]
    for s in range(1, n):
        num = (
            -sys.drift(s - 1, xj)
            - tuning.chi(s - 1, zs[s - 1])
            + alphas[s - 1].derivative()
        )
        if s >= 2:
            num = num - sys.gain(s - 2, xj) * zs[s - 2]
        alpha = num / sys.gain(s - 1, xj)
        alphas.append(alpha)
        zs.append(xj[s] - alpha)
    return xj, alphas, zs


def _ref_jet_from_derivs(ref_derivs, n: int) -> jets.Jet:
    d = np.asarray(ref_derivs, dtype=float).reshape(-1)
    if d.size < n + 1:
        raise ConfigError(
            f"need reference derivatives up to order {n} "
            f"({n + 1} values), got {d.size}"
        )
    return jets.Jet(tuple(d[k] / math.factorial(k) for k in range(n + 1)))


def _top_stage_input(sys, tuning, xj, alphas, zs) -> float:
    n = sys.n
    num = (
        -sys.drift(n - 1, xj)
        - tuning.chi(n - 1, zs[n - 1])
        + alphas[n - 1].derivative()
    )
    if n >= 2:
        num = num - sys.gain(n - 2, xj) * zs[n - 2]
    u = num / sys.gain(n - 1, xj)
    return jets.value_of(u)


def virtual_controls(
    sys: StrictFeedbackSystem, x, ref_derivs, tuning: TuningFunctions, t: float = 0.0
) -> VirtualControlStack:
    """Evaluate the full recursion at state ``x``.

    ``ref_derivs`` stacks the reference value and derivatives at ``t`` (time
    enters only through them; the argument is kept for callback symmetry).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != sys.n:
        raise ShapeError(f"state has {x.size} entries, system order is {sys.n}")
    _, alphas, zs = _alpha_stack(sys, x, _ref_jet_from_derivs(ref_derivs, sys.n), tuning)
    return VirtualControlStack(
        alphas=np.array([a.value for a in alphas]),
        alpha_dots=np.array([a.c[1] for a in alphas]),
        z=np.array([z.value for z in zs]),
    )


def backstepping_control(
    sys: StrictFeedbackSystem, x, ref_derivs, tuning: TuningFunctions, t: float = 0.0
) -> float:
    """Exact top-stage input; the chain gain b_n plays the input-gain role."""
    x = np.asarray(x, dtype=float).reshape(-1)
    xj, alphas, zs = _alpha_stack(sys, x, _ref_jet_from_derivs(ref_derivs, sys.n), tuning)
    return _top_stage_input(sys, tuning, xj, alphas, zs)


def z_jacobian(tuning: TuningFunctions, b_values, z) -> Array:
    """Jacobian of the error-coordinate closed loop.

    Tridiagonal: diagonal -chi_i'(z_i), superdiagonal b_i, subdiagonal -b_i.
    The symmetric part is -diag(chi_i') for any gains, which is what makes
    the loop contract at rate min_i chi_i' in the identity metric.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    b = np.asarray(b_values, dtype=float).reshape(-1)
    n = z.size
    if b.size != n - 1:
        raise ShapeError(f"need {n - 1} couplings for order {n}, got {b.size}")
    jac = np.zeros((n, n))
    for i in range(n):
        jac[i, i] = -tuning.chi_prime(i, z[i])
        if i < n - 1:
            jac[i, i + 1] = b[i]
            jac[i + 1, i] = -b[i]
    return jac


def state_for_error_coords(
    sys: StrictFeedbackSystem, tuning: TuningFunctions, ref_derivs, z
) -> tuple[Array, Array]:
    """State whose error coordinates equal ``z``, plus the matching alphas.

    Inverts z_i = x_i - alpha_i(x) stage by stage; the triangular dependence
    makes a handful of fixed-point passes exact.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    n = sys.n
    if z.size != n:
        raise ShapeError(f"error vector has {z.size} entries, expected {n}")
    ref_jet = _ref_jet_from_derivs(ref_derivs, n)
    x = np.zeros(n)
    x[0] = z[0] + ref_jet.value
    alphas = np.zeros(n)
    for _ in range(n):
        _, alpha_jets, _ = _alpha_stack(sys, x, ref_jet, tuning)
        alphas = np.array([a.value for a in alpha_jets])
        x = np.concatenate([[z[0] + alphas[0]], z[1:] + alphas[1:]])
    _, alpha_jets, _ = _alpha_stack(sys, x, ref_jet, tuning)
    alphas = np.array([a.value for a in alpha_jets])
    return x, alphas


def _bs_loop(
    sys: StrictFeedbackSystem,
    ref: ReferenceSignal,
    tuning: TuningFunctions,
    x0,
    cfg: IntegratorConfig,
) -> dict:
    """Object-level fixed-step loop; also serves as the pure-Python kernel."""
    n = sys.n
    x = np.array(x0, dtype=float).reshape(-1)
    if x.size != n:
        raise ShapeError(f"x0 has {x.size} entries, system order is {n}")
    steps = cfg.n_steps
    stepper = _STEPPERS[cfg.method]

    def field(t, state):
        derivs = reference_derivs(ref, t, n)
        u = backstepping_control(sys, state, derivs, tuning, t)
        return eval_dynamics(sys, state, u)

    def record(i: int, t: float) -> None:
        ref_jet = ref.jet(t, n)
        xj, alpha_jets, z_jets = _alpha_stack(sys, xs[i], ref_jet, tuning)
        alphas[i] = [a.value for a in alpha_jets]
        us[i] = _top_stage_input(sys, tuning, xj, alpha_jets, z_jets)

    xs = np.empty((steps + 1, n))
    alphas = np.empty((steps + 1, n))
    us = np.empty(steps + 1)
    xs[0] = x
    for i in range(steps):
        t = cfg.t0 + i * cfg.dt
        record(i, t)
        x = stepper(field, t, xs[i], cfg.dt)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"state became non-finite at t={t + cfg.dt:.6g}", time=t + cfg.dt
            )
        xs[i + 1] = x
    record(steps, cfg.t0 + steps * cfg.dt)
    return {"x": xs, "alpha": alphas, "u": us}


def simulate_backstepping(
    sys: StrictFeedbackSystem,
    ref: ReferenceSignal,
    tuning: TuningFunctions,
    x0,
    cfg: IntegratorConfig,
) -> Trajectory:
    """Closed-loop run of the exact law on a disturbance-free plant.

    Records state, error coordinates, commanded virtual controls, and the
    input. Uses the compiled kernel when the plant, tuning, and reference
    can be packed for it; otherwise falls back to the object loop.
    """
    from ._core import run_plan, try_build_backstepping_plan

    plan = try_build_backstepping_plan(sys, ref, tuning, x0, cfg)
    raw = run_plan(plan) if plan is not None else _bs_loop(sys, ref, tuning, x0, cfg)
    xs = raw["x"]
    alphas = raw["alpha"]
    z = xs - alphas
    return Trajectory(
        cfg.t0,
        cfg.dt,
        {"x": xs, "z": z, "alpha": alphas, "u": raw["u"]},
    )
