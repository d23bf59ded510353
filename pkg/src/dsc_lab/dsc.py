"""Filtered control law, high-gain disturbance observer, and the combined
closed loop.

Instead of differentiating the virtual controls analytically, each commanded
alpha_i passes through a first-order filter

    mu * d(alpha_if)/dt = -alpha_if + alpha_i,    alpha_if(0) = alpha_i(0),

and the stage recursion consumes the filter identity (alpha_i - alpha_if)/mu
in place of the derivative. Stage 1 is unfiltered (its target is the
reference itself, whose first derivative is analytic), and the error
coordinates track the filtered targets: z_1 = x_1 - x_d, z_i = x_i - alpha_if.

Disturbances are estimated per state equation by

    d(xi_i)/dt = -k (xi_i + k x_i - f_i - b_i * drive_i),   dhat_i = xi_i + k x_i,

whose induced estimate dynamics are d(dhat_i)/dt = -k (dhat_i - d_i) whenever
the plant follows the chain model exactly. The combined loop integrates the
augmented state [x, alpha_f, xi] with one fixed step for all three time
scales, which is why dt <= min(mu, 1/k)/10 is enforced up front.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backstepping import TuningFunctions, virtual_controls
from .errors import ConfigError, DivergenceError, ShapeError
from .jets import value_of as jtv
from .numerics import IntegratorConfig, Trajectory, _STEPPERS
from .plant import (
    DisturbanceProfile,
    ReferenceSignal,
    StrictFeedbackSystem,
    eval_dynamics,
    reference_derivs,
)

Array = np.ndarray


@dataclass(frozen=True)
class DscConfig:
    """Design parameters of the filtered loop.

    mu is the filter time constant, k the observer gain (1/k is the observer
    time constant, and (1/k)/mu their ratio).
    """

    mu: float
    k: float
    tuning: TuningFunctions
    observer_enabled: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < self.mu <= 1.0):
            raise ConfigError(f"mu must lie in (0, 1], got {self.mu}")
        if not self.k > 0.0:
            raise ConfigError(f"observer gain must be positive, got {self.k}")

    @property
    def epsilon(self) -> float:
        return 1.0 / self.k

    @property
    def kappa(self) -> float:
        return self.epsilon / self.mu


@dataclass
class FilterBank:
    """Filter states alpha_2f..alpha_nf and their shared time constant."""

    alpha_f: Array
    mu: float

    def __post_init__(self) -> None:
        if not self.mu > 0.0:
            raise ConfigError(f"filter parameter must be positive, got {self.mu}")
        self.alpha_f = np.asarray(self.alpha_f, dtype=float).reshape(-1)


@dataclass
class ObserverState:
    """Intermediate observer variables xi_1..xi_n with gain k."""

    xi: Array
    k: float

    def __post_init__(self) -> None:
        if not self.k > 0.0:
            raise ConfigError(f"observer gain must be positive, got {self.k}")
        self.xi = np.asarray(self.xi, dtype=float).reshape(-1)

    def d_hat(self, x) -> Array:
        return self.xi + self.k * np.asarray(x, dtype=float).reshape(-1)


def filter_dynamics(bank: FilterBank, alpha) -> Array:
    """Filter state derivatives (-alpha_f + alpha) / mu."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.size != bank.alpha_f.size:
        raise ShapeError(
            f"{alpha.size} commands for {bank.alpha_f.size} filters"
        )
    return (alpha - bank.alpha_f) / bank.mu


def observer_dynamics(
    obs: ObserverState, x, u: float, sys: StrictFeedbackSystem
) -> Array:
    """xi derivatives; the top stage sees the input through b_n * u.

    The modeled drift and drive enter with the sign that makes the induced
    estimate dynamics collapse to d(dhat_i)/dt = -k (dhat_i - d_i) whenever
    the plant follows the chain model exactly:

        d(dhat)/dt = xi_dot + k x_dot
                   = -k (dhat + model) + k (model + d) = -k (dhat - d).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = sys.n
    if obs.xi.size != n or x.size != n:
        raise ShapeError("observer and state dimensions must equal the order")
    out = np.empty(n)
    for i in range(n):
        drive = u if i == n - 1 else x[i + 1]
        model = sys.drift(i, x) + sys.gain(i, x) * drive
        out[i] = -obs.k * (obs.xi[i] + obs.k * x[i] + model)
    return out


def dsc_control(
    sys: StrictFeedbackSystem,
    x,
    bank: FilterBank | None,
    obs: ObserverState | None,
    ref: ReferenceSignal,
    tuning: TuningFunctions,
    t: float = 0.0,
    mu_limit: bool = False,
) -> tuple[float, Array]:
    """Input and commanded virtual controls alpha_2..alpha_n at one state.

    Stage 2 uses the analytic reference derivative (the stage-1 target is
    unfiltered); every later stage reads its derivative from the filter
    identity, so no analytic differentiation of the stack happens anywhere.
    Estimates are subtracted per stage; pass ``obs=None`` to disable them.

    ``mu_limit`` slaves the filters to the commands and substitutes the
    exact derivatives, reducing the recursion to the analytic law. It exists
    to test that reduction, not as a control mode.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = sys.n
    if x.size != n:
        raise ShapeError(f"state has {x.size} entries, system order is {n}")
    if n >= 2 and bank is None and not mu_limit:
        raise ConfigError("a filter bank is required for chains of order >= 2")
    if bank is not None and bank.alpha_f.size != n - 1:
        raise ShapeError(
            f"filter bank has {bank.alpha_f.size} states, expected {n - 1}"
        )
    d_hat = obs.d_hat(x) if obs is not None else np.zeros(n)

    exact_dots = None
    if mu_limit:
        stack = virtual_controls(sys, x, reference_derivs(ref, t, n), tuning, t)
        exact_dots = stack.alpha_dots

    z = np.empty(n)
    alpha = np.empty(n - 1)
    z[0] = x[0] - ref.value(t)
    adot_prev = ref.derivative(t, 1)
    for i in range(1, n):
        num = (
            -jtv(sys.drift(i - 1, x))
            - tuning.chi(i - 1, z[i - 1])
            + adot_prev
            - d_hat[i - 1]
        )
        if i >= 2:
            num -= jtv(sys.gain(i - 2, x)) * z[i - 2]
        alpha[i - 1] = num / jtv(sys.gain(i - 1, x))
        if mu_limit:
            z[i] = x[i] - alpha[i - 1]
            adot_prev = exact_dots[i]
        else:
            z[i] = x[i] - bank.alpha_f[i - 1]
            adot_prev = (alpha[i - 1] - bank.alpha_f[i - 1]) / bank.mu
    num = (
        -jtv(sys.drift(n - 1, x))
        - tuning.chi(n - 1, z[n - 1])
        + adot_prev
        - d_hat[n - 1]
    )
    if n >= 2:
        num -= jtv(sys.gain(n - 2, x)) * z[n - 2]
    u = num / jtv(sys.gain(n - 1, x))
    return float(u), alpha


def initial_filter_state(
    sys: StrictFeedbackSystem,
    cfg: DscConfig,
    ref: ReferenceSignal,
    x0,
    t0: float = 0.0,
) -> Array:
    """Filter initialization alpha_if(0) = alpha_i(0).

    The commands are evaluated stage by stage with each filter seeded as it
    is produced, so the quotient terms of later stages start at zero.
    Estimates start at zero (xi(0) = -k * x0), matching simulate_dsc.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n = sys.n
    if n == 1:
        return np.zeros(0)
    alpha_f = np.zeros(n - 1)
    z_prev = x0[0] - ref.value(t0)
    adot_prev = ref.derivative(t0, 1)
    z = [z_prev]
    for i in range(1, n):
        num = -jtv(sys.drift(i - 1, x0)) - cfg.tuning.chi(i - 1, z[i - 1]) + adot_prev
        if i >= 2:
            num -= jtv(sys.gain(i - 2, x0)) * z[i - 2]
        alpha_f[i - 1] = num / jtv(sys.gain(i - 1, x0))
        z.append(x0[i] - alpha_f[i - 1])
        adot_prev = 0.0  # filter seeded at the command it just produced
    return alpha_f


def check_step_coupling(cfg: DscConfig, icfg: IntegratorConfig) -> None:
    """Fixed steps must resolve both fast time constants."""
    cap = min(cfg.mu, 1.0 / cfg.k) / 10.0
    if icfg.dt > cap * (1.0 + 1e-12):
        raise ConfigError(
            f"dt={icfg.dt} too large for mu={cfg.mu}, k={cfg.k}; "
            f"need dt <= {cap:.3g}"
        )


def _dsc_loop(
    sys: StrictFeedbackSystem,
    cfg: DscConfig,
    ref: ReferenceSignal,
    profile: DisturbanceProfile | None,
    x0,
    icfg: IntegratorConfig,
    mu_limit: bool = False,
) -> dict:
    """Object-level fixed-step loop over the augmented state [x, alpha_f, xi]."""
    n = sys.n
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n:
        raise ShapeError(f"x0 has {x0.size} entries, system order is {n}")
    steps = icfg.n_steps
    stepper = _STEPPERS[icfg.method]
    k = cfg.k

    def control(state, t):
        x = state[:n]
        bank = FilterBank(state[n : 2 * n - 1], cfg.mu)
        obs = ObserverState(state[2 * n - 1 :], k)
        law_obs = obs if cfg.observer_enabled else None
        return dsc_control(sys, x, bank, law_obs, ref, cfg.tuning, t, mu_limit=mu_limit)

    def field(t, state):
        x = state[:n]
        u, alpha = control(state, t)
        d = (
            profile.state_disturbance(x, t, n)
            if profile is not None
            else np.zeros(n)
        )
        xdot = eval_dynamics(sys, x, u, d)
        afdot = (alpha - state[n : 2 * n - 1]) / cfg.mu
        xidot = observer_dynamics(ObserverState(state[2 * n - 1 :], k), x, u, sys)
        return np.concatenate([xdot, afdot, xidot])

    y = np.concatenate(
        [x0, initial_filter_state(sys, cfg, ref, x0, icfg.t0), -k * x0]
    )
    ys = np.empty((steps + 1, y.size))
    us = np.empty(steps + 1)
    alphas = np.empty((steps + 1, n - 1))
    ys[0] = y
    for i in range(steps):
        t = icfg.t0 + i * icfg.dt
        us[i], alphas[i] = control(ys[i], t)
        y = stepper(field, t, ys[i], icfg.dt)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(
                f"state became non-finite at t={t + icfg.dt:.6g}",
                time=t + icfg.dt,
            )
        ys[i + 1] = y
    t_end = icfg.t0 + steps * icfg.dt
    us[-1], alphas[-1] = control(ys[-1], t_end)
    return {
        "x": ys[:, :n],
        "alpha_f": ys[:, n : 2 * n - 1],
        "xi": ys[:, 2 * n - 1 :],
        "alpha": alphas,
        "u": us,
    }


def _finalize_dsc_trajectory(
    raw: dict,
    sys: StrictFeedbackSystem,
    cfg: DscConfig,
    ref: ReferenceSignal,
    profile: DisturbanceProfile | None,
    icfg: IntegratorConfig,
) -> Trajectory:
    n = sys.n
    xs = raw["x"]
    alpha_f = raw["alpha_f"]
    xi = raw["xi"]
    alpha = raw["alpha"]
    times = icfg.t0 + icfg.dt * np.arange(xs.shape[0])
    xd = np.array([ref.value(t) for t in times])
    z = np.empty_like(xs)
    z[:, 0] = xs[:, 0] - xd
    if n > 1:
        z[:, 1:] = xs[:, 1:] - alpha_f
    if profile is not None:
        d = np.array(
            [profile.state_disturbance(xs[i], times[i], n) for i in range(len(times))]
        )
    else:
        d = np.zeros_like(xs)
    d_hat = xi + cfg.k * xs
    return Trajectory(
        icfg.t0,
        icfg.dt,
        {
            "x": xs,
            "z": z,
            "alpha": alpha,
            "alpha_f": alpha_f,
            "alpha_tilde": alpha_f - alpha,
            "d": d,
            "d_hat": d_hat,
            "d_tilde": d - d_hat,
            "u": raw["u"],
            "xi": xi,
        },
    )


def simulate_dsc(
    sys: StrictFeedbackSystem,
    cfg: DscConfig,
    ref: ReferenceSignal,
    profile: DisturbanceProfile | None,
    x0,
    icfg: IntegratorConfig,
    mu_limit: bool = False,
) -> Trajectory:
    """Run the combined loop and record every named channel.

    The observer block integrates regardless of ``cfg.observer_enabled`` (its
    estimates are recorded either way); the flag only controls whether the
    law subtracts them. Estimates start at zero.
    """
    check_step_coupling(cfg, icfg)
    raw = None
    if not mu_limit:
        from ._core import run_plan, try_build_dsc_plan

        plan = try_build_dsc_plan(sys, cfg, ref, profile, x0, icfg)
        if plan is not None:
            raw = run_plan(plan)
    if raw is None:
        raw = _dsc_loop(sys, cfg, ref, profile, x0, icfg, mu_limit=mu_limit)
    return _finalize_dsc_trajectory(raw, sys, cfg, ref, profile, icfg)
