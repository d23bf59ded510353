"""Strict-feedback plants, disturbance signal generators, and references.

The plant abstraction is the lower-triangular chain

    dx_i/dt = f_i(x_1..x_i) + b_i(x_1..x_i) * x_{i+1} + d_i,   i < n
    dx_n/dt = f_n(x) + b_n(x) * u + d_n

with strictly positive stage gains b_i. Stage maps may be arbitrary callables
or :class:`StageExpr` term sums; the latter can be packed for the compiled
simulation kernels and evaluated on jets for exact derivative propagation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import ConfigError, GainFloorError, ShapeError

Array = np.ndarray

# Division by stage gains appears throughout the control laws, so a strictly
# positive floor replaces the merely nonnegative textbook assumption.
DEFAULT_GAIN_FLOOR = 1e-9

_TERM_KINDS = ("const", "lin", "sin", "cos")


@dataclass(frozen=True)
class StageTerm:
    """One additive term of a stage map: coef * basis(x[index])."""

    coef: float
    kind: str = "const"
    index: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _TERM_KINDS:
            raise ConfigError(
                f"unknown term kind {self.kind!r}; expected one of {_TERM_KINDS}"
            )
        if self.index < 0:
            raise ConfigError(f"state index must be nonnegative, got {self.index}")


class StageExpr:
    """Sum of :class:`StageTerm` entries, callable on floats or jets."""

    __slots__ = ("terms",)

    def __init__(self, *terms: StageTerm):
        self.terms = tuple(terms)

    @classmethod
    def zero(cls) -> "StageExpr":
        return cls()

    @classmethod
    def const(cls, value: float) -> "StageExpr":
        return cls(StageTerm(value, "const"))

    def max_index(self) -> int:
        idx = -1
        for term in self.terms:
            if term.kind != "const":
                idx = max(idx, term.index)
        return idx

    def __call__(self, x):
        acc = 0.0
        for term in self.terms:
            if term.kind == "const":
                acc = acc + term.coef
            elif term.kind == "lin":
                acc = acc + term.coef * x[term.index]
            elif term.kind == "sin":
                acc = acc + term.coef * jets.sin(x[term.index])
            else:
                acc = acc + term.coef * jets.cos(x[term.index])
        return acc

    def __repr__(self) -> str:
        return f"StageExpr({', '.join(map(repr, self.terms))})"


@dataclass(frozen=True)
class StrictFeedbackSystem:
    """Lower-triangular chain with per-stage drift and gain evaluators.

    ``f`` and ``b`` hold one evaluator per stage, each called with the full
    state sequence; stage i may only read coordinates 0..i (checked for term
    expressions, by convention for raw callables).
    """

    n: int
    f: tuple
    b: tuple
    state_units: tuple[str, ...] = ()
    gain_floor: float = DEFAULT_GAIN_FLOOR

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError(f"system order must be >= 1, got {self.n}")
        if len(self.f) != self.n or len(self.b) != self.n:
            raise ConfigError(
                f"need {self.n} drift and gain evaluators, got "
                f"{len(self.f)} and {len(self.b)}"
            )
        if self.state_units and len(self.state_units) != self.n:
            raise ConfigError("state_units must match the system order")
        if not self.gain_floor > 0.0:
            raise ConfigError("gain floor must be strictly positive")
        for i, (fi, bi) in enumerate(zip(self.f, self.b)):
            for role, expr in (("f", fi), ("b", bi)):
                if isinstance(expr, StageExpr) and expr.max_index() > i:
                    raise ConfigError(
                        f"stage {i + 1} {role}-expression reads coordinate "
                        f"{expr.max_index() + 1}, beyond the strict-feedback range"
                    )

    def drift(self, i: int, x):
        return self.f[i](x)

    def gain(self, i: int, x):
        """Stage gain with the positivity floor enforced on its value."""
        value = self.b[i](x)
        if jets.value_of(value) < self.gain_floor:
            raise GainFloorError(
                f"stage {i + 1} gain {jets.value_of(value):.3g} fell below "
                f"the floor {self.gain_floor:.3g}"
            )
        return value

    def is_term_based(self) -> bool:
        return all(
            isinstance(e, StageExpr) for e in self.f + self.b
        )


def eval_dynamics(sys: StrictFeedbackSystem, x, u: float, d=None, t: float = 0.0) -> Array:
    """Chain derivatives at state ``x`` under input ``u`` and disturbance ``d``.

    ``d`` carries one entry per state equation (zeros where absent). The stage
    maps are time-invariant; ``t`` is accepted to match field-callback
    signatures.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != sys.n:
        raise ShapeError(f"state has {x.size} entries, system order is {sys.n}")
    if d is None:
        d = np.zeros(sys.n)
    else:
        d = np.asarray(d, dtype=float).reshape(-1)
        if d.size != sys.n:
            raise ShapeError(
                f"disturbance has {d.size} entries, expected {sys.n}"
            )
    out = np.empty(sys.n)
    for i in range(sys.n):
        drive = u if i == sys.n - 1 else x[i + 1]
        out[i] = sys.drift(i, x) + sys.gain(i, x) * drive + d[i]
    return out


@dataclass(frozen=True)
class DcMotorParams:
    """Armature-controlled DC motor driving a single link under gravity.

    Units: K_b [N*m/A], R [ohm], L [H]; M, B, N lump inertia, damping and the
    gravity torque coefficient of the mechanical side.
    """

    K_b: float = 0.90
    R: float = 5.0
    L: float = 0.025
    M: float = 0.0640
    B: float = 0.0044
    N: float = 2.2816

    def __post_init__(self) -> None:
        for name in ("K_b", "R", "L", "M", "B", "N"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"motor parameter {name} must be positive")


def dc_motor_system(p: DcMotorParams | None = None) -> StrictFeedbackSystem:
    """Third-order position/velocity/current chain for the bench motor.

    States are link angle [rad], angular rate [rad/s], and armature current
    [A]; the input is the armature voltage.
    """
    if p is None:
        p = DcMotorParams()
    f1 = StageExpr.zero()
    b1 = StageExpr.const(1.0)
    f2 = StageExpr(
        StageTerm(-p.N / p.M, "sin", 0),
        StageTerm(-p.B / p.M, "lin", 1),
    )
    b2 = StageExpr.const(1.0 / p.M)
    f3 = StageExpr(
        StageTerm(-p.K_b / p.L, "lin", 1),
        StageTerm(-p.R / p.L, "lin", 2),
    )
    b3 = StageExpr.const(1.0 / p.L)
    return StrictFeedbackSystem(
        n=3,
        f=(f1, f2, f3),
        b=(b1, b2, b3),
        state_units=("rad", "rad/s", "A"),
    )


# -- disturbance signals ----------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: float

    def eval(self, x, t: float) -> float:
        return self.value

    def rate_bound(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Ramp:
    slope: float

    def eval(self, x, t: float) -> float:
        return self.slope * t

    def rate_bound(self) -> float:
        return abs(self.slope)


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    frequency: float
    phase: float = 0.0

    def eval(self, x, t: float) -> float:
        return self.amplitude * math.sin(self.frequency * t + self.phase)

    def rate_bound(self) -> float:
        return abs(self.amplitude * self.frequency)


@dataclass(frozen=True)
class SignumOfState:
    """Coulomb-style term gain * sgn(x[state_index]), with sgn(0) = 0."""

    gain: float
    state_index: int

    def eval(self, x, t: float) -> float:
        v = x[self.state_index]
        if v > 0.0:
            return self.gain
        if v < 0.0:
            return -self.gain
        return 0.0

    def rate_bound(self) -> None:
        # Discontinuous: excluded from the smooth rate bound and reported
        # through magnitude_bound instead.
        return None


_SMOOTH_TERMS = (Constant, Ramp, Sinusoid)


@dataclass(frozen=True)
class DisturbanceProfile:
    """Named disturbance channels routed into state equations.

    ``channels[k]`` is a tuple of terms summed to form signal k;
    ``channel_map[k]`` is the 0-based state equation that signal enters.
    Distinct channels must target distinct equations.
    """

    channels: tuple = ()
    channel_map: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.channels) != len(self.channel_map):
            raise ConfigError(
                f"{len(self.channels)} channels but "
                f"{len(self.channel_map)} map entries"
            )
        if len(set(self.channel_map)) != len(self.channel_map):
            raise ConfigError("channel_map entries must be distinct")
        for eq in self.channel_map:
            if eq < 0:
                raise ConfigError(f"state equation index {eq} is negative")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def eval_channels(self, x, t: float) -> Array:
        """Per-channel signal values (before state-equation routing)."""
        out = np.zeros(self.n_channels)
        for k, terms in enumerate(self.channels):
            out[k] = sum(term.eval(x, t) for term in terms)
        return out

    def state_disturbance(self, x, t: float, n: int | None = None) -> Array:
        """Disturbance vector indexed by state equation (zeros elsewhere)."""
        if n is None:
            n = len(x)
        d = np.zeros(n)
        values = self.eval_channels(x, t)
        for k, eq in enumerate(self.channel_map):
            if eq >= n:
                raise ConfigError(
                    f"channel {k + 1} targets state equation {eq + 1} but the "
                    f"system order is {n}"
                )
            d[eq] = values[k]
        return d

    def smooth_rate_bound(self) -> float:
        """Worst-channel rate bound of the differentiable terms.

        Signum terms are excluded (their magnitude is reported separately via
        :meth:`signum_magnitude`).
        """
        worst = 0.0
        for terms in self.channels:
            rate = 0.0
            for term in terms:
                r = term.rate_bound()
                if r is not None:
                    rate += r
            worst = max(worst, rate)
        return worst

    def signum_magnitude(self) -> float:
        worst = 0.0
        for terms in self.channels:
            mag = sum(
                abs(term.gain)
                for term in terms
                if isinstance(term, SignumOfState)
            )
            worst = max(worst, mag)
        return worst


def disturbance_eval(profile: DisturbanceProfile, x, t: float) -> Array:
    """Per-channel disturbance values at state ``x`` and time ``t``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    for terms in profile.channels:
        for term in terms:
            if isinstance(term, SignumOfState) and term.state_index >= x.size:
                raise ConfigError(
                    f"signum term reads state {term.state_index + 1} but the "
                    f"state has {x.size} entries"
                )
    return profile.eval_channels(x, t)


# -- reference trajectory ----------------------------------------------------


@dataclass(frozen=True)
class ReferenceSignal:
    """Sinusoidal reference A*sin(w*t + phase) with analytic derivatives."""

    amplitude: float
    angular_frequency: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.amplitude) or not math.isfinite(
            self.angular_frequency
        ):
            raise ConfigError("reference parameters must be finite")

    def value(self, t: float) -> float:
        return self.amplitude * math.sin(self.angular_frequency * t + self.phase)

    def derivative(self, t: float, order: int) -> float:
        # d^k/dt^k A sin(wt+p) = A w^k sin(wt + p + k*pi/2)
        w = self.angular_frequency
        return self.amplitude * w**order * math.sin(
            w * t + self.phase + order * (math.pi / 2.0)
        )

    def jet(self, t: float, order: int) -> jets.Jet:
        return jets.Jet(
            tuple(
                self.derivative(t, k) / math.factorial(k)
                for k in range(order + 1)
            )
        )


def reference_derivs(ref: ReferenceSignal, t: float, order: int) -> Array:
    """Stacked derivatives [x_d, x_d', ..., x_d^(order)] at time ``t``."""
    if order < 0:
        raise ConfigError(f"derivative order must be >= 0, got {order}")
    return np.array([ref.derivative(t, k) for k in range(order + 1)])
