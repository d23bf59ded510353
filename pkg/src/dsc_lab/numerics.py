"""Shared numerical kernel: fixed-step integration, finite differences,
matrix measures, and deterministic grid suprema.

Every operation here is a pure function of its inputs; returned arrays are
never mutated afterwards, so values can be shared freely between threads.
Vectors and matrices are plain float64 numpy arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditioningError,
    ConfigError,
    DivergenceError,
    NumericalError,
    ShapeError,
)

Array = np.ndarray

INTEGRATION_METHODS = ("rk4", "euler")

# Cap on points a single grid supremum may visit.
_MAX_GRID_POINTS = 2_000_000


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings.

    Explicit fixed-step methods only; stiff fast dynamics are handled by the
    simulation front ends, which refuse steps larger than a tenth of the
    fastest loop time constant.
    """

    dt: float
    t_final: float
    t0: float = 0.0
    method: str = "rk4"
    max_steps: int = 2_000_000

    def __post_init__(self) -> None:
        if self.method not in INTEGRATION_METHODS:
            raise ConfigError(
                f"unknown integration method {self.method!r}; "
                f"expected one of {INTEGRATION_METHODS}"
            )
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive and finite, got {self.dt}")
        if not self.t_final > self.t0:
            raise ConfigError(
                f"t_final ({self.t_final}) must exceed t0 ({self.t0})"
            )
        # Force access through n_steps so the grid check runs at build time.
        self.n_steps  # noqa: B018

    @property
    def n_steps(self) -> int:
        """Number of steps; the horizon must sit on the step grid."""
        span = self.t_final - self.t0
        estimate = span / self.dt
        steps = int(round(estimate))
        if steps < 1 or abs(estimate - steps) > 1e-6 * max(1.0, estimate):
            raise ConfigError(
                f"horizon {span} is not an integer multiple of dt={self.dt}"
            )
        if steps > self.max_steps:
            raise ConfigError(
                f"{steps} steps exceed the configured cap of {self.max_steps}"
            )
        return steps


@dataclass
class Trajectory:
    """Uniformly sampled named series on the grid t0 + i*dt.

    Channels are numpy arrays whose leading dimension is the sample count;
    scalar channels are 1-D, vector channels 2-D.
    """

    t0: float
    dt: float
    channels: dict[str, Array] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        lengths = {name: arr.shape[0] for name, arr in self.channels.items()}
        if len(set(lengths.values())) > 1:
            raise ShapeError(f"channel lengths differ: {lengths}")

    def __len__(self) -> int:
        if not self.channels:
            return 0
        return next(iter(self.channels.values())).shape[0]

    @property
    def times(self) -> Array:
        return self.t0 + self.dt * np.arange(len(self))

    def channel(self, name: str) -> Array:
        try:
            return self.channels[name]
        except KeyError:
            raise KeyError(
                f"no channel {name!r}; have {sorted(self.channels)}"
            ) from None


def _rk4_step(f, t: float, x: Array, h: float) -> Array:
    k1 = np.asarray(f(t, x), dtype=float)
    k2 = np.asarray(f(t + 0.5 * h, x + (0.5 * h) * k1), dtype=float)
    k3 = np.asarray(f(t + 0.5 * h, x + (0.5 * h) * k2), dtype=float)
    k4 = np.asarray(f(t + h, x + h * k3), dtype=float)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _euler_step(f, t: float, x: Array, h: float) -> Array:
    return x + h * np.asarray(f(t, x), dtype=float)


_STEPPERS = {"rk4": _rk4_step, "euler": _euler_step}


def integrate(field, x0, cfg: IntegratorConfig) -> Trajectory:
    """Integrate dx/dt = field(t, x) on the fixed grid of ``cfg``.

    Both endpoints are included. The run is deterministic for identical
    inputs. A non-finite state aborts with a DivergenceError carrying the
    first bad grid time.
    """
    x = np.array(x0, dtype=float, copy=True).reshape(-1)
    steps = cfg.n_steps
    stepper = _STEPPERS[cfg.method]
    out = np.empty((steps + 1, x.size))
    out[0] = x
    h = cfg.dt
    for i in range(steps):
        t = cfg.t0 + i * h
        x = stepper(field, t, x, h)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"state became non-finite at t={t + h:.6g}", time=t + h
            )
        out[i + 1] = x
    return Trajectory(cfg.t0, h, {"x": out})


def jacobian_numeric(field, x, h: float | None = None) -> Array:
    """Central-difference Jacobian of ``field`` at ``x``.

    Entry (i, j) is (f_i(x + h_j e_j) - f_i(x - h_j e_j)) / (2 h_j). When no
    step is given, h_j = 1e-6 * max(1, |x_j|) balances truncation against
    rounding for each axis.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    cols = []
    for j in range(n):
        hj = h if h is not None else 1e-6 * max(1.0, abs(x[j]))
        if not hj > 0.0:
            raise ConfigError(f"difference step must be positive, got {hj}")
        xp = x.copy()
        xm = x.copy()
        xp[j] += hj
        xm[j] -= hj
        fp = np.asarray(field(xp), dtype=float).reshape(-1)
        fm = np.asarray(field(xm), dtype=float).reshape(-1)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise NumericalError(
                f"field evaluation non-finite while perturbing coordinate {j}"
            )
        cols.append((fp - fm) / (2.0 * hj))
    return np.column_stack(cols)


def _require_square(a, name: str) -> Array:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    return arr


def matrix_measure_inf(a) -> float:
    """Matrix measure induced by the infinity norm.

    max_i (A_ii + sum_{j != i} |A_ij|), the one-sided derivative of
    ||I + h A||_inf at h = 0+.
    """
    arr = _require_square(a, "matrix")
    diag = np.diag(arr)
    off = np.sum(np.abs(arr), axis=1) - np.abs(diag)
    return float(np.max(diag + off))


def symmetric_eigenvalues(a, tol: float = 1e-12, max_sweeps: int = 100) -> Array:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below
    tol * max(1, ||A||_F). Intended for the small (n <= 16) matrices that
    arise here; no external eigensolver is involved.
    """
    s = np.array(_require_square(a, "matrix"), copy=True)
    n = s.shape[0]
    if n == 1:
        return s[0, :1].copy()
    threshold = tol * max(1.0, float(np.linalg.norm(s)))
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, float(np.sum(s * s) - np.sum(np.diag(s) ** 2))))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = s[p, q]
                if abs(apq) < 1e-300:
                    continue
                tau = (s[q, q] - s[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:  # tau*tau would overflow
                    t = 0.5 / tau
                elif tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * c
                rp = s[p, :].copy()
                rq = s[q, :].copy()
                s[p, :] = c * rp - sn * rq
                s[q, :] = sn * rp + c * rq
                cp = s[:, p].copy()
                cq = s[:, q].copy()
                s[:, p] = c * cp - sn * cq
                s[:, q] = sn * cp + c * cq
    return np.sort(np.diag(s))


def matrix_measure_2(a) -> float:
    """Matrix measure induced by the Euclidean norm.

    Largest eigenvalue of the symmetric part (A + A^T)/2, computed with the
    in-house Jacobi sweep.
    """
    arr = _require_square(a, "matrix")
    sym = 0.5 * (arr + arr.T)
    return float(symmetric_eigenvalues(sym)[-1])


def induced_norm_2(a) -> float:
    """Spectral norm via the largest eigenvalue of A^T A."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {arr.shape}")
    gram = arr.T @ arr
    return math.sqrt(max(0.0, float(symmetric_eigenvalues(gram)[-1])))


def generalized_jacobian(theta, theta_dot, jac, cond_cap: float = 1e12) -> Array:
    """Metric-transformed Jacobian (theta_dot + theta @ jac) @ inv(theta).

    Refuses metrics whose 1-norm condition estimate exceeds ``cond_cap``.
    """
    th = _require_square(theta, "theta")
    thd = _require_square(theta_dot, "theta_dot")
    j = _require_square(jac, "jacobian")
    if not (th.shape == thd.shape == j.shape):
        raise ShapeError(
            f"shape mismatch: theta {th.shape}, theta_dot {thd.shape}, "
            f"jacobian {j.shape}"
        )
    try:
        th_inv = np.linalg.inv(th)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"metric is singular: {exc}") from exc
    cond = float(
        np.linalg.norm(th, 1) * np.linalg.norm(th_inv, 1)
    )
    if not math.isfinite(cond) or cond > cond_cap:
        raise ConditioningError(
            f"metric condition estimate {cond:.3g} exceeds cap {cond_cap:.3g}"
        )
    return (thd + th @ j) @ th_inv


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with a uniform sampling resolution per axis."""

    lower: Array
    upper: Array
    resolution: int = 7

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape:
            raise ShapeError(
                f"bound shapes differ: {lo.shape} vs {hi.shape}"
            )
        if not np.all(lo < hi):
            raise ConfigError("box lower bounds must be strictly below upper")
        if self.resolution < 2:
            raise ConfigError(
                f"resolution must be at least 2, got {self.resolution}"
            )
        if self.resolution ** self.dim > _MAX_GRID_POINTS:
            raise ConfigError(
                f"grid of {self.resolution}^{self.dim} points exceeds the "
                f"cap of {_MAX_GRID_POINTS}"
            )

    @property
    def dim(self) -> int:
        return self.lower.size

    def axes(self) -> list[Array]:
        return [
            np.linspace(self.lower[i], self.upper[i], self.resolution)
            for i in range(self.dim)
        ]

    def iter_points(self):
        """Deterministic row-major iteration over the grid."""
        for combo in itertools.product(*self.axes()):
            yield np.array(combo)

    def concat(self, other: "Box") -> "Box":
        """Product box over the concatenated axes (resolutions must match)."""
        if other.resolution != self.resolution:
            raise ConfigError(
                "cannot concatenate boxes with different resolutions "
                f"({self.resolution} vs {other.resolution})"
            )
        return Box(
            np.concatenate([self.lower, other.lower]),
            np.concatenate([self.upper, other.upper]),
            self.resolution,
        )


def sup_over_box(g, box: Box, margin: float = 1.1) -> float:
    """Grid supremum of |g| over ``box`` times a safety margin.

    The grid is deterministic (uniform, endpoints included), so repeated
    calls reproduce the same constant; refinement can only grow the result.
    """
    if margin <= 0.0:
        raise ConfigError(f"margin must be positive, got {margin}")
    best = -math.inf
    for point in box.iter_points():
        value = float(g(point))
        if not math.isfinite(value):
            raise NumericalError(
                f"non-finite sample {value} at grid point {point.tolist()}"
            )
        mag = abs(value)
        if mag > best:
            best = mag
    return best * margin
