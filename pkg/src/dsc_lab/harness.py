"""Declarative experiment execution, metric extraction, sweeps, and output
files.

Experiments are described by flat ``key = value`` pairs with dotted sections
(see ``KEY_HELP``); the same keys serve as CLI overrides. Three presets
(`fig1`, `fig2`, `fig3`) encode the bench DC-motor scenarios: recovery
comparison without disturbances, the disturbed loop at low control gain, and
the disturbed loop at high control gain.

Outputs are one CSV per trajectory plus a JSON report; both are
byte-identical across reruns of the same spec (no clocks, no RNG).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .backstepping import TuningFunctions, simulate_backstepping, z_jacobian
from .contraction import (
    BoundReport,
    contraction_rate_z,
    estimate_c2,
    estimate_c3,
    estimate_lipschitz,
    mu_star,
    observer_bound,
    steady_state_bound,
    verify_contraction,
    _closed_loop_zdot,
    _quasi_steady_alphas,
)
from .dsc import DscConfig, simulate_dsc
from .errors import ConfigError
from .numerics import Box, IntegratorConfig, Trajectory, integrate
from .plant import (
    Constant,
    DcMotorParams,
    DisturbanceProfile,
    Ramp,
    ReferenceSignal,
    SignumOfState,
    Sinusoid,
    StrictFeedbackSystem,
    dc_motor_system,
)

Array = np.ndarray

_CONTROLLERS = ("backstepping", "dsc", "both")
_SWEEP_AXES = ("kc", "mu", "k")

KEY_HELP = {
    "plant.name": "plant selector (dc_motor)",
    "plant.K_b": "motor torque constant [N*m/A]",
    "plant.R": "armature resistance [ohm]",
    "plant.L": "armature inductance [H]",
    "plant.M": "mechanical inertia",
    "plant.B": "mechanical damping",
    "plant.N": "gravity torque coefficient",
    "ref.amplitude": "reference amplitude [rad]",
    "ref.omega": "reference angular frequency [rad/s]",
    "run.controller": "backstepping | dsc | both",
    "dsc.mu": "filter parameter in (0, 1]",
    "dsc.k": "observer gain",
    "dsc.observer": "subtract estimates in the law (true/false)",
    "tuning.kc": "linear control gain",
    "sim.dt": "integration step [s]",
    "sim.t_final": "horizon [s]",
    "sim.x0": "initial state, comma separated",
    "dist.enabled": "apply the disturbance profile (true/false)",
    "dist.ch<k>": "channel k terms, ';' separated: const:v | ramp:s | sin:a:w:p | sgn:g:state",
    "dist.map": "1-based state equation per channel, comma separated",
    "boxes.z_lower": "estimation box, error coordinates",
    "boxes.z_upper": "estimation box, error coordinates",
    "boxes.alpha_lower": "estimation box, filtered commands",
    "boxes.alpha_upper": "estimation box, filtered commands",
    "boxes.dhat_lower": "estimation box, estimates",
    "boxes.dhat_upper": "estimation box, estimates",
    "boxes.resolution": "grid samples per axis (>= 2)",
    "sweep.axis": "kc | mu | k",
    "sweep.values": "comma separated values",
    "out.dir": "output directory",
    "metrics.tail_fraction": "tail window as a fraction of the horizon",
    "metrics.settle_band": "settling band on the first error channel [rad]",
}

_EXACT_KEYS = {k for k in KEY_HELP if "<" not in k}

# Disturbance profile of the DC-motor case study: Coulomb friction plus a
# sinusoid and a ramp on the velocity equation, a sinusoid on the current
# equation.
_CASE_STUDY_CHANNELS = (
    "sgn:0.2:2; sin:10:2:1; ramp:10",
    f"sin:10:2:{1.0 + math.pi / 2.0!r}",
)
_CASE_STUDY_MAP = "2,3"


def _parse_bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "on", "yes", "1"):
        return True
    if t in ("false", "off", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _parse_float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _parse_floats(text: str, key: str) -> tuple[float, ...]:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise ConfigError(f"{key}: expected a comma-separated list, got {text!r}")
    return tuple(_parse_float(s, key) for s in items)


def _parse_term(token: str, key: str):
    parts = [p.strip() for p in token.split(":")]
    kind = parts[0]
    try:
        if kind == "const" and len(parts) == 2:
            return Constant(float(parts[1]))
        if kind == "ramp" and len(parts) == 2:
            return Ramp(float(parts[1]))
        if kind == "sin" and len(parts) == 4:
            return Sinusoid(float(parts[1]), float(parts[2]), float(parts[3]))
        if kind == "sgn" and len(parts) == 3:
            return SignumOfState(float(parts[1]), int(parts[2]) - 1)
    except ValueError:
        raise ConfigError(f"{key}: malformed term {token!r}") from None
    raise ConfigError(
        f"{key}: unknown term {token!r}; expected const:v, ramp:s, "
        "sin:a:w:p, or sgn:g:state"
    )


def _parse_channel(text: str, key: str) -> tuple:
    tokens = [s for s in (p.strip() for p in text.split(";")) if s]
    if not tokens:
        raise ConfigError(f"{key}: empty channel definition")
    return tuple(_parse_term(tok, key) for tok in tokens)


class ExperimentSpec:
    """Validated experiment description built from flat key/value pairs."""

    def __init__(self, pairs: dict[str, str]):
        for key in pairs:
            if key not in _EXACT_KEYS and not (
                key.startswith("dist.ch") and key[7:].isdigit()
            ):
                raise ConfigError(
                    f"unknown spec key {key!r}; known keys: "
                    f"{', '.join(sorted(_EXACT_KEYS))}, dist.ch<k>"
                )
        self.pairs = dict(pairs)
        get = self.pairs.get

        self.plant_name = get("plant.name", "dc_motor")
        if self.plant_name != "dc_motor":
            raise ConfigError(
                f"plant.name: unsupported plant {self.plant_name!r} "
                "(supported: dc_motor)"
            )
        self.plant_params = DcMotorParams(
            K_b=_parse_float(get("plant.K_b", "0.90"), "plant.K_b"),
            R=_parse_float(get("plant.R", "5.0"), "plant.R"),
            L=_parse_float(get("plant.L", "0.025"), "plant.L"),
            M=_parse_float(get("plant.M", "0.0640"), "plant.M"),
            B=_parse_float(get("plant.B", "0.0044"), "plant.B"),
            N=_parse_float(get("plant.N", "2.2816"), "plant.N"),
        )
        self.ref = ReferenceSignal(
            amplitude=_parse_float(get("ref.amplitude", repr(math.pi / 2)), "ref.amplitude"),
            angular_frequency=_parse_float(
                get("ref.omega", repr(8.0 * math.pi / 5.0)), "ref.omega"
            ),
        )
        self.controller = get("run.controller", "both").strip()
        if self.controller not in _CONTROLLERS:
            raise ConfigError(
                f"run.controller: expected one of {_CONTROLLERS}, "
                f"got {self.controller!r}"
            )
        self.mu = _parse_float(get("dsc.mu", "0.01"), "dsc.mu")
        self.k = _parse_float(get("dsc.k", "50.0"), "dsc.k")
        self.observer_enabled = _parse_bool(get("dsc.observer", "true"), "dsc.observer")
        self.kc = _parse_float(get("tuning.kc", "5.0"), "tuning.kc")
        self.dt = _parse_float(get("sim.dt", "1e-4"), "sim.dt")
        self.t_final = _parse_float(get("sim.t_final", "10.0"), "sim.t_final")
        self.x0 = (
            np.array(_parse_floats(self.pairs["sim.x0"], "sim.x0"))
            if "sim.x0" in self.pairs
            else None
        )

        self.dist_enabled = _parse_bool(get("dist.enabled", "false"), "dist.enabled")
        self.profile = self._build_profile()

        self.boxes = self._build_boxes()
        self.sweep_axis = get("sweep.axis", "").strip() or None
        if self.sweep_axis is not None and self.sweep_axis not in _SWEEP_AXES:
            raise ConfigError(
                f"sweep.axis: expected one of {_SWEEP_AXES}, got {self.sweep_axis!r}"
            )
        self.sweep_values = (
            _parse_floats(self.pairs["sweep.values"], "sweep.values")
            if "sweep.values" in self.pairs
            else ()
        )
        self.out_dir = get("out.dir", "out")
        self.tail_fraction = _parse_float(
            get("metrics.tail_fraction", "0.2"), "metrics.tail_fraction"
        )
        if not (0.0 < self.tail_fraction <= 1.0):
            raise ConfigError("metrics.tail_fraction must lie in (0, 1]")
        self.settle_band = _parse_float(
            get("metrics.settle_band", "0.05"), "metrics.settle_band"
        )

        # Surface bad integration grids and step-coupling violations now,
        # for the base point and every sweep cell.
        self.integrator_config()
        if self.controller in ("dsc", "both"):
            self._check_coupling(self.mu, self.k, self.dt)
            for cell in self.sweep_cells():
                self._check_coupling(cell.mu, cell.k, cell.dt)

    @staticmethod
    def _check_coupling(mu: float, k: float, dt: float) -> None:
        cap = min(mu, 1.0 / k) / 10.0
        if dt > cap * (1.0 + 1e-12):
            raise ConfigError(
                f"sim.dt={dt} violates the step-coupling rule for mu={mu}, "
                f"k={k}; need dt <= {cap:.3g}"
            )

    def _build_profile(self) -> DisturbanceProfile | None:
        chan_keys = sorted(
            (k for k in self.pairs if k.startswith("dist.ch")),
            key=lambda k: int(k[7:]),
        )
        if not chan_keys and not self.dist_enabled:
            return None
        if not chan_keys:
            channels = tuple(
                _parse_channel(c, "dist.ch") for c in _CASE_STUDY_CHANNELS
            )
            map_text = _CASE_STUDY_MAP
        else:
            channels = tuple(
                _parse_channel(self.pairs[k], k) for k in chan_keys
            )
            if "dist.map" not in self.pairs:
                raise ConfigError("dist.map is required with custom channels")
            map_text = self.pairs["dist.map"]
        eqs = tuple(int(v) - 1 for v in _parse_floats(map_text, "dist.map"))
        if len(eqs) != len(channels):
            raise ConfigError(
                f"dist.map lists {len(eqs)} equations for {len(channels)} channels"
            )
        n = self.system().n
        for eq in eqs:
            if not (0 <= eq < n):
                raise ConfigError(
                    f"dist.map equation {eq + 1} is outside the plant order {n}"
                )
        return DisturbanceProfile(channels=channels, channel_map=eqs)

    def _build_boxes(self):
        keys = [k for k in self.pairs if k.startswith("boxes.")]
        if not keys:
            return None
        needed = ("boxes.z_lower", "boxes.z_upper", "boxes.alpha_lower", "boxes.alpha_upper")
        for k in needed:
            if k not in self.pairs:
                raise ConfigError(f"estimation boxes are incomplete: missing {k}")
        res = int(_parse_float(self.pairs.get("boxes.resolution", "7"), "boxes.resolution"))
        z_lo = _parse_floats(self.pairs["boxes.z_lower"], "boxes.z_lower")
        z_hi = _parse_floats(self.pairs["boxes.z_upper"], "boxes.z_upper")
        a_lo = _parse_floats(self.pairs["boxes.alpha_lower"], "boxes.alpha_lower")
        a_hi = _parse_floats(self.pairs["boxes.alpha_upper"], "boxes.alpha_upper")
        d_lo = _parse_floats(
            self.pairs.get("boxes.dhat_lower", ",".join(["-50"] * len(z_lo))),
            "boxes.dhat_lower",
        )
        d_hi = _parse_floats(
            self.pairs.get("boxes.dhat_upper", ",".join(["50"] * len(z_lo))),
            "boxes.dhat_upper",
        )
        return BoxSet(
            z=Box(z_lo, z_hi, res),
            alpha=Box(a_lo, a_hi, res),
            dhat=Box(d_lo, d_hi, res),
        )

    # -- built objects -----------------------------------------------------

    def system(self) -> StrictFeedbackSystem:
        return dc_motor_system(self.plant_params)

    def tuning(self) -> TuningFunctions:
        return TuningFunctions.linear(self.kc, self.system().n)

    def dsc_config(self) -> DscConfig:
        return DscConfig(
            mu=self.mu,
            k=self.k,
            tuning=self.tuning(),
            observer_enabled=self.observer_enabled,
        )

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(dt=self.dt, t_final=self.t_final)

    def initial_state(self) -> Array:
        n = self.system().n
        if self.x0 is None:
            return np.zeros(n)
        if self.x0.size != n:
            raise ConfigError(
                f"sim.x0 has {self.x0.size} entries, plant order is {n}"
            )
        return self.x0.copy()

    def cell_for(self, axis: str, value: float) -> "ExperimentSpec":
        """Spec for one sweep cell; sweep keys are dropped to keep cells flat."""
        key = {"kc": "tuning.kc", "mu": "dsc.mu", "k": "dsc.k"}[axis]
        pairs = {
            k: v for k, v in self.pairs.items() if not k.startswith("sweep.")
        }
        pairs[key] = repr(float(value))
        return ExperimentSpec(pairs)

    def sweep_cells(self) -> list["ExperimentSpec"]:
        if self.sweep_axis is None or not self.sweep_values:
            return []
        return [self.cell_for(self.sweep_axis, v) for v in self.sweep_values]


@dataclass(frozen=True)
class BoxSet:
    z: Box
    alpha: Box
    dhat: Box


def parse_spec_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment; blanks ignored."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def parse_spec_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"spec file not found: {p}")
    return parse_spec_text(p.read_text())


# -- presets -----------------------------------------------------------------

_PRESET_BASE = {
    "plant.name": "dc_motor",
    "ref.amplitude": repr(math.pi / 2),
    "ref.omega": repr(8.0 * math.pi / 5.0),
    "tuning.kc": "5.0",
    "dsc.mu": "0.01",
    "dsc.k": "50.0",
    "sim.dt": "1e-4",
    "sim.t_final": "10.0",
    "sim.x0": f"{repr(2.0 * math.pi)},0.0,0.0",
    "boxes.z_lower": f"{repr(-2.0 * math.pi)},{repr(-2.0 * math.pi)},{repr(-2.0 * math.pi)}",
    "boxes.z_upper": f"{repr(2.0 * math.pi)},{repr(2.0 * math.pi)},{repr(2.0 * math.pi)}",
    "boxes.alpha_lower": "-50,-50",
    "boxes.alpha_upper": "50,50",
    "boxes.dhat_lower": "-50,-50,-50",
    "boxes.dhat_upper": "50,50,50",
    "boxes.resolution": "7",
    "metrics.tail_fraction": "0.2",
}

_PRESET_DELTAS = {
    "fig1": {
        "run.controller": "both",
        "dist.enabled": "false",
        "dsc.observer": "false",
        "out.dir": "out/fig1",
    },
    "fig2": {
        "run.controller": "dsc",
        "dist.enabled": "true",
        "dsc.observer": "true",
        "out.dir": "out/fig2",
    },
    "fig3": {
        "run.controller": "dsc",
        "dist.enabled": "true",
        "dsc.observer": "true",
        "tuning.kc": "40.0",
        "out.dir": "out/fig3",
    },
}

PRESET_NAMES = tuple(sorted(_PRESET_DELTAS))


def preset_pairs(name: str) -> dict[str, str]:
    if name not in _PRESET_DELTAS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        )
    pairs = dict(_PRESET_BASE)
    pairs.update(_PRESET_DELTAS[name])
    return pairs


def preset(name: str) -> ExperimentSpec:
    return ExperimentSpec(preset_pairs(name))


# -- metrics -------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelMetrics:
    tail_rms_z: tuple
    tail_sup_z: tuple
    sup_u: float
    settling_time_z1: float | None

    def to_dict(self) -> dict:
        return {
            "tail_rms_z": list(self.tail_rms_z),
            "tail_sup_z": list(self.tail_sup_z),
            "sup_u": self.sup_u,
            "settling_time_z1": self.settling_time_z1,
        }


@dataclass(frozen=True)
class RecoveryGap:
    """Channelwise |z_dsc - z_bs| summaries."""

    tail_sup: tuple
    tail_rms: tuple
    sup: tuple

    def to_dict(self) -> dict:
        return {
            "tail_sup": list(self.tail_sup),
            "tail_rms": list(self.tail_rms),
            "sup": list(self.sup),
        }


@dataclass(frozen=True)
class Metrics:
    tail_start: float
    settle_band: float
    controllers: dict
    recovery: RecoveryGap | None

    def to_dict(self) -> dict:
        return {
            "tail_start": self.tail_start,
            "settle_band": self.settle_band,
            "controllers": {
                name: cm.to_dict() for name, cm in sorted(self.controllers.items())
            },
            "recovery": self.recovery.to_dict() if self.recovery else None,
        }


def _tail_mask(traj: Trajectory, tail_start: float) -> Array:
    return traj.times >= tail_start - 1e-12


def _channel_metrics(traj: Trajectory, tail_start: float, band: float) -> ChannelMetrics:
    z = traj.channel("z")
    u = traj.channel("u")
    mask = _tail_mask(traj, tail_start)
    zt = z[mask]
    tail_rms = tuple(float(v) for v in np.sqrt(np.mean(zt * zt, axis=0)))
    tail_sup = tuple(float(v) for v in np.max(np.abs(zt), axis=0))
    z1 = np.abs(z[:, 0])
    outside = np.nonzero(z1 > band)[0]
    if outside.size == 0:
        settling: float | None = float(traj.times[0])
    elif outside[-1] == len(traj) - 1:
        settling = None
    else:
        settling = float(traj.times[outside[-1] + 1])
    return ChannelMetrics(
        tail_rms_z=tail_rms,
        tail_sup_z=tail_sup,
        sup_u=float(np.max(np.abs(u))),
        settling_time_z1=settling,
    )


def _recovery_gap(
    dsc_traj: Trajectory, bs_traj: Trajectory, tail_start: float
) -> RecoveryGap:
    gap = np.abs(dsc_traj.channel("z") - bs_traj.channel("z"))
    mask = _tail_mask(dsc_traj, tail_start)
    gt = gap[mask]
    return RecoveryGap(
        tail_sup=tuple(float(v) for v in np.max(gt, axis=0)),
        tail_rms=tuple(float(v) for v in np.sqrt(np.mean(gt * gt, axis=0))),
        sup=tuple(float(v) for v in np.max(gap, axis=0)),
    )


class ExperimentResult(NamedTuple):
    trajectories: dict
    metrics: Metrics
    bounds: BoundReport | None
    spec: ExperimentSpec


def _bound_report(spec: ExperimentSpec) -> BoundReport:
    sys = spec.system()
    tuning = spec.tuning()
    boxes = spec.boxes
    n = sys.n
    profile = spec.profile if spec.dist_enabled else None
    c1 = profile.smooth_rate_bound() if profile is not None else 0.0
    signum = profile.signum_magnitude() if profile is not None else 0.0
    c2 = estimate_c2(sys, tuning, boxes.z, boxes.alpha)
    c3 = estimate_c3(sys, tuning, boxes.z, boxes.alpha)
    lam = contraction_rate_z(tuning, boxes.z)

    # Lipschitz constants of the error dynamics in the fast variables,
    # evaluated around the origin slice (the couplings are state gains and
    # the unit estimate feedthrough, both state-independent for this plant).
    z0 = np.zeros(n)
    alpha0, x0 = _quasi_steady_alphas(sys, tuning, z0)

    def in_v(v):
        zdot = _closed_loop_zdot(sys, tuning, z0, v[: n - 1], alpha0, x0)
        return zdot - v[n - 1 :]

    def in_alpha(a):
        return _closed_loop_zdot(sys, tuning, z0, a, alpha0, x0)

    L_v = estimate_lipschitz(in_v, boxes.alpha.concat(boxes.dhat))
    L_1 = estimate_lipschitz(in_alpha, boxes.alpha)
    kappa = (1.0 / spec.k) / spec.mu
    ms = mu_star(c2)
    return BoundReport(
        c1=c1,
        c2=c2,
        c3=c3,
        L_v=L_v,
        L_1=L_1,
        lambda_z=lam,
        C_z=1.0,
        kappa=kappa,
        mu_star=ms,
        fast_bound_terms={
            "decay_rate": 1.0 / spec.mu,
            "offset_unscaled": max(c1, c3),
            "offset_mu_scaled": spec.mu * max(c1, c3),
        },
        ss_bound=steady_state_bound(spec.mu, 1.0, L_v, c1, c3, lam, kappa),
        observer_bound=observer_bound(c1, spec.k),
        signum_magnitude=signum,
    )


def run_experiment(spec: ExperimentSpec, with_bounds: bool = True) -> ExperimentResult:
    """Run the requested controllers on identical plant/reference settings."""
    sys = spec.system()
    tuning = spec.tuning()
    icfg = spec.integrator_config()
    x0 = spec.initial_state()
    wanted = ("backstepping", "dsc") if spec.controller == "both" else (spec.controller,)

    trajectories: dict[str, Trajectory] = {}
    if "backstepping" in wanted:
        if spec.dist_enabled:
            raise ConfigError(
                "the analytic baseline is disturbance-free; disable "
                "dist.enabled or run controller=dsc"
            )
        trajectories["backstepping"] = simulate_backstepping(
            sys, spec.ref, tuning, x0, icfg
        )
    if "dsc" in wanted:
        profile = spec.profile if spec.dist_enabled else None
        trajectories["dsc"] = simulate_dsc(
            sys, spec.dsc_config(), spec.ref, profile, x0, icfg
        )

    tail_start = spec.t_final - spec.tail_fraction * (spec.t_final - icfg.t0)
    controllers = {
        name: _channel_metrics(traj, tail_start, spec.settle_band)
        for name, traj in trajectories.items()
    }
    recovery = None
    if len(trajectories) == 2:
        recovery = _recovery_gap(
            trajectories["dsc"], trajectories["backstepping"], tail_start
        )
    metrics = Metrics(
        tail_start=tail_start,
        settle_band=spec.settle_band,
        controllers=controllers,
        recovery=recovery,
    )
    bounds = _bound_report(spec) if (with_bounds and spec.boxes is not None) else None
    return ExperimentResult(trajectories, metrics, bounds, spec)


def compare_controllers(spec: ExperimentSpec) -> Metrics:
    """Recovery-gap summary; requires both controllers and no disturbances."""
    if spec.controller != "both":
        raise ConfigError("comparison requires run.controller = both")
    if spec.dist_enabled:
        raise ConfigError("comparison is defined on the disturbance-free loop")
    return run_experiment(spec, with_bounds=False).metrics


class SweepCell(NamedTuple):
    value: float
    metrics: Metrics


class SweepResult(NamedTuple):
    axis: str
    cells: list
    monotonicity: dict


def _sweep_workers(n_cells: int) -> int:
    env = os.environ.get("DSC_LAB_THREADS", "").strip()
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(
                f"DSC_LAB_THREADS must be an integer, got {env!r}"
            ) from None
        if cap < 1:
            raise ConfigError("DSC_LAB_THREADS must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_cells))


def gain_sweep(
    spec: ExperimentSpec, axis: str | None = None, values=None
) -> SweepResult:
    """One experiment per value along ``axis``; rows keep input order.

    Cells execute on a thread pool capped by DSC_LAB_THREADS (the compiled
    kernels release the interpreter lock during integration).
    """
    axis = axis or spec.sweep_axis
    if axis not in _SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {_SWEEP_AXES}, got {axis!r}")
    values = tuple(values) if values is not None else spec.sweep_values
    if not values:
        raise ConfigError("sweep needs a nonempty value list")
    cells_specs = [spec.cell_for(axis, v) for v in values]

    with ThreadPoolExecutor(max_workers=_sweep_workers(len(values))) as pool:
        results = list(pool.map(lambda s: run_experiment(s, with_bounds=False), cells_specs))

    cells = [SweepCell(float(v), r.metrics) for v, r in zip(values, results)]

    def series(name: str) -> list[float] | None:
        out = []
        for cell in cells:
            cm = cell.metrics.controllers.get(name)
            if cm is None:
                return None
            out.append(cm.tail_rms_z[0])
        return out

    monotonicity: dict[str, bool] = {}
    for name in ("dsc", "backstepping"):
        s = series(name)
        if s is not None:
            monotonicity[f"tail_rms_z1_nonincreasing_{name}"] = all(
                s[i + 1] <= s[i] * (1.0 + 1e-9) for i in range(len(s) - 1)
            )
    gaps = [
        cell.metrics.recovery.tail_sup[0]
        for cell in cells
        if cell.metrics.recovery is not None
    ]
    if len(gaps) == len(cells):
        monotonicity["recovery_gap_nondecreasing"] = all(
            gaps[i + 1] >= gaps[i] * (1.0 - 1e-9) for i in range(len(gaps) - 1)
        )
    return SweepResult(axis=axis, cells=cells, monotonicity=monotonicity)


# -- file outputs ---------------------------------------------------------------


def _fmt(v: float) -> str:
    if v == 0.0:
        v = 0.0  # normalize the sign of zero for stable output
    return np.format_float_positional(
        v, precision=9, unique=False, fractional=False, trim="k"
    )


def write_trajectory_csv(traj: Trajectory, path: Path, n: int) -> None:
    """Fixed-schema CSV; the analytic baseline fills the filter and estimate
    columns with its commanded values and zeros."""
    cols = (
        ["t"]
        + [f"x{i}" for i in range(1, n + 1)]
        + [f"z{i}" for i in range(1, n + 1)]
        + ["u"]
        + [f"alpha{i}" for i in range(2, n + 1)]
        + [f"alphaf{i}" for i in range(2, n + 1)]
        + [f"dhat{i}" for i in range(1, n + 1)]
        + [f"d{i}" for i in range(1, n + 1)]
    )
    rows = len(traj)
    if rows:
        x = traj.channel("x")
        z = traj.channel("z")
        u = traj.channel("u")
        alpha = traj.channel("alpha")
        alpha = alpha[:, 1:] if alpha.shape[1] == n else alpha
        if "alpha_f" in traj.channels:
            alpha_f = traj.channel("alpha_f")
            d_hat = traj.channel("d_hat")
            d = traj.channel("d")
        else:
            alpha_f = alpha
            d_hat = np.zeros((rows, n))
            d = np.zeros((rows, n))
        times = traj.times
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(rows):
            vals = (
                [times[i]]
                + list(x[i])
                + list(z[i])
                + [u[i]]
                + list(alpha[i])
                + list(alpha_f[i])
                + list(d_hat[i])
                + list(d[i])
            )
            fh.write(",".join(_fmt(float(v)) for v in vals) + "\n")


def write_outputs(result: ExperimentResult, out_dir: str | Path | None = None) -> list[Path]:
    """CSV per trajectory plus a JSON report; bit-identical across reruns."""
    out = Path(out_dir if out_dir is not None else result.spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = result.spec.system().n
    paths = []
    for name in sorted(result.trajectories):
        p = out / f"{name}.csv"
        write_trajectory_csv(result.trajectories[name], p, n)
        paths.append(p)
    report = {
        "spec": dict(sorted(result.spec.pairs.items())),
        "metrics": result.metrics.to_dict(),
        "bounds": result.bounds.to_dict() if result.bounds else None,
    }
    rp = out / "report.json"
    with open(rp, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(rp)
    return paths


def write_sweep_outputs(
    sweep: SweepResult, spec: ExperimentSpec, out_dir: str | Path | None = None
) -> Path:
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "axis": sweep.axis,
        "cells": [
            {"value": cell.value, "metrics": cell.metrics.to_dict()}
            for cell in sweep.cells
        ],
        "monotonicity": sweep.monotonicity,
        "spec": dict(sorted(spec.pairs.items())),
    }
    path = out / "sweep.json"
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# -- fast self-checks (CLI `validate`) -----------------------------------------


def run_validation_checks() -> list[tuple[str, bool, str]]:
    """Quick invariants: integrator order, filter step response, observer
    ramp error, and the skew contraction rate."""
    results = []

    # fourth-order step scaling on exponential decay
    def decay(t, x):
        return -x

    errs = []
    for dt in (0.01, 0.005):
        cfg = IntegratorConfig(dt=dt, t_final=1.0)
        end = integrate(decay, [1.0], cfg).channel("x")[-1, 0]
        errs.append(abs(end - math.exp(-1.0)))
    ratio = errs[0] / errs[1]
    results.append(
        ("integrator_order", 14.0 <= ratio <= 18.0, f"halving ratio {ratio:.2f}")
    )

    # first-order filter step response at one time constant
    mu = 0.05

    def filt(t, a):
        return (1.0 - a) / mu

    val = integrate(filt, [0.0], IntegratorConfig(dt=mu / 1000.0, t_final=mu)).channel(
        "x"
    )[-1, 0]
    target = 1.0 - math.exp(-1.0)
    ok = abs(val - target) <= 1e-3 * target
    results.append(("filter_step_response", ok, f"alpha_f(mu) = {val:.6f}"))

    # observer under a ramp: steady error slope/k
    k = 50.0
    slope = 10.0

    def obs_field(t, y):
        x, xi = y
        d = slope * t
        return np.array([d, -k * (xi + k * x)])

    tr = integrate(obs_field, [0.0, 0.0], IntegratorConfig(dt=1e-3, t_final=1.0))
    x_end, xi_end = tr.channel("x")[-1]
    err = abs(slope * 1.0 - (xi_end + k * x_end))
    ok = abs(err - slope / k) <= 0.05 * (slope / k)
    results.append(("observer_ramp_error", ok, f"steady error {err:.4f}"))

    # skew structure of the error-coordinate Jacobian
    tuning = TuningFunctions.linear(5.0, 3)
    rng = np.random.default_rng(7)
    ok = True
    detail = ""
    for _ in range(20):
        z = rng.uniform(-3, 3, size=3)
        b = rng.uniform(0.5, 20.0, size=2)
        jac = z_jacobian(tuning, b, z)
        sym = jac + jac.T
        if not np.allclose(sym, -2.0 * 5.0 * np.eye(3), atol=1e-12):
            ok = False
            detail = "symmetric part mismatch"
            break
        from .numerics import matrix_measure_2

        m = matrix_measure_2(jac)
        if abs(m + 5.0) > 1e-9:
            ok = False
            detail = f"measure {m:.3e}"
            break
    box = Box([-1.0] * 3, [1.0] * 3, 3)
    certified, worst = verify_contraction(
        lambda p: z_jacobian(tuning, np.array([1.0, 15.625]), p),
        np.eye(3),
        np.zeros((3, 3)),
        box,
    )
    ok = ok and certified and abs(worst + 5.0) <= 1e-9
    results.append(
        ("skew_contraction_rate", ok, detail or f"certified rate {-worst:.6f}")
    )
    return results
