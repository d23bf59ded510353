"""Packing of a closed-loop run into a flat numeric plan.

A :class:`SimPlan` describes one fixed-step simulation entirely with scalars
and small arrays (stage-term tables in CSR layout, linear gains, reference
and disturbance parameters). Both kernels share this interface: the compiled
extension consumes it directly, and the pure-Python backend expands it back
into evaluator objects. Systems or tunings that cannot be expressed this way
return ``None`` from the builders and run on the object loop instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..backstepping import TuningFunctions
from ..dsc import DscConfig, check_step_coupling
from ..numerics import INTEGRATION_METHODS, IntegratorConfig
from ..plant import (
    Constant,
    DisturbanceProfile,
    Ramp,
    ReferenceSignal,
    SignumOfState,
    Sinusoid,
    StageExpr,
    StrictFeedbackSystem,
)

# The compiled kernels size their scratch arrays for chains up to this order.
MAX_KERNEL_ORDER = 8

_TERM_CODE = {"const": 0, "lin": 1, "sin": 2, "cos": 3}
_DIST_CODE = {Constant: 0, Ramp: 1, Sinusoid: 2, SignumOfState: 3}


@dataclass(frozen=True)
class SimPlan:
    controller: str  # "dsc" or "backstepping"
    n: int
    # stage drift / gain term tables (CSR over stages)
    f_kind: np.ndarray
    f_coef: np.ndarray
    f_idx: np.ndarray
    f_off: np.ndarray
    b_kind: np.ndarray
    b_coef: np.ndarray
    b_idx: np.ndarray
    b_off: np.ndarray
    gains: np.ndarray  # per-stage linear tuning gains
    ref_amp: float
    ref_omega: float
    ref_phase: float
    # disturbance terms: kind, params (a, b, c), signum state index, equation
    d_kind: np.ndarray
    d_a: np.ndarray
    d_b: np.ndarray
    d_c: np.ndarray
    d_idx: np.ndarray
    d_eq: np.ndarray
    mu: float
    k_obs: float
    observer_enabled: bool
    x0: np.ndarray
    dt: float
    t0: float
    n_steps: int
    method: int  # index into INTEGRATION_METHODS
    gain_floor: float


def _pack_terms(exprs) -> tuple | None:
    kinds: list[int] = []
    coefs: list[float] = []
    idxs: list[int] = []
    offsets = [0]
    for expr in exprs:
        if not isinstance(expr, StageExpr):
            return None
        for term in expr.terms:
            kinds.append(_TERM_CODE[term.kind])
            coefs.append(term.coef)
            idxs.append(term.index)
        offsets.append(len(kinds))
    return (
        np.asarray(kinds, dtype=np.int32),
        np.asarray(coefs, dtype=np.float64),
        np.asarray(idxs, dtype=np.int32),
        np.asarray(offsets, dtype=np.int32),
    )


def _pack_profile(profile: DisturbanceProfile | None, n: int) -> tuple | None:
    kinds: list[int] = []
    pa: list[float] = []
    pb: list[float] = []
    pc: list[float] = []
    idxs: list[int] = []
    eqs: list[int] = []
    if profile is not None:
        for terms, eq in zip(profile.channels, profile.channel_map):
            if eq >= n:
                return None
            for term in terms:
                code = _DIST_CODE.get(type(term))
                if code is None:
                    return None
                if isinstance(term, Constant):
                    params = (term.value, 0.0, 0.0, 0)
                elif isinstance(term, Ramp):
                    params = (term.slope, 0.0, 0.0, 0)
                elif isinstance(term, Sinusoid):
                    params = (term.amplitude, term.frequency, term.phase, 0)
                else:
                    if term.state_index >= n:
                        return None
                    params = (term.gain, 0.0, 0.0, term.state_index)
                kinds.append(code)
                pa.append(params[0])
                pb.append(params[1])
                pc.append(params[2])
                idxs.append(params[3])
                eqs.append(eq)
    return (
        np.asarray(kinds, dtype=np.int32),
        np.asarray(pa, dtype=np.float64),
        np.asarray(pb, dtype=np.float64),
        np.asarray(pc, dtype=np.float64),
        np.asarray(idxs, dtype=np.int32),
        np.asarray(eqs, dtype=np.int32),
    )


def _common_checks(
    sys: StrictFeedbackSystem,
    tuning: TuningFunctions,
    ref: ReferenceSignal,
    x0,
) -> bool:
    return (
        sys.n <= MAX_KERNEL_ORDER
        and sys.is_term_based()
        and tuning.linear_gains is not None
        and isinstance(ref, ReferenceSignal)
        and len(np.asarray(x0, dtype=float).reshape(-1)) == sys.n
    )


def try_build_backstepping_plan(
    sys: StrictFeedbackSystem,
    ref: ReferenceSignal,
    tuning: TuningFunctions,
    x0,
    cfg: IntegratorConfig,
) -> SimPlan | None:
    if not _common_checks(sys, tuning, ref, x0):
        return None
    f_tab = _pack_terms(sys.f)
    b_tab = _pack_terms(sys.b)
    if f_tab is None or b_tab is None:
        return None
    d_tab = _pack_profile(None, sys.n)
    return SimPlan(
        controller="backstepping",
        n=sys.n,
        f_kind=f_tab[0],
        f_coef=f_tab[1],
        f_idx=f_tab[2],
        f_off=f_tab[3],
        b_kind=b_tab[0],
        b_coef=b_tab[1],
        b_idx=b_tab[2],
        b_off=b_tab[3],
        gains=np.asarray(tuning.linear_gains, dtype=np.float64),
        ref_amp=ref.amplitude,
        ref_omega=ref.angular_frequency,
        ref_phase=ref.phase,
        d_kind=d_tab[0],
        d_a=d_tab[1],
        d_b=d_tab[2],
        d_c=d_tab[3],
        d_idx=d_tab[4],
        d_eq=d_tab[5],
        mu=0.0,
        k_obs=0.0,
        observer_enabled=False,
        x0=np.asarray(x0, dtype=np.float64).reshape(-1),
        dt=cfg.dt,
        t0=cfg.t0,
        n_steps=cfg.n_steps,
        method=INTEGRATION_METHODS.index(cfg.method),
        gain_floor=sys.gain_floor,
    )


def try_build_dsc_plan(
    sys: StrictFeedbackSystem,
    cfg: DscConfig,
    ref: ReferenceSignal,
    profile: DisturbanceProfile | None,
    x0,
    icfg: IntegratorConfig,
) -> SimPlan | None:
    check_step_coupling(cfg, icfg)
    if not _common_checks(sys, cfg.tuning, ref, x0):
        return None
    f_tab = _pack_terms(sys.f)
    b_tab = _pack_terms(sys.b)
    d_tab = _pack_profile(profile, sys.n)
    if f_tab is None or b_tab is None or d_tab is None:
        return None
    return SimPlan(
        controller="dsc",
        n=sys.n,
        f_kind=f_tab[0],
        f_coef=f_tab[1],
        f_idx=f_tab[2],
        f_off=f_tab[3],
        b_kind=b_tab[0],
        b_coef=b_tab[1],
        b_idx=b_tab[2],
        b_off=b_tab[3],
        gains=np.asarray(cfg.tuning.linear_gains, dtype=np.float64),
        ref_amp=ref.amplitude,
        ref_omega=ref.angular_frequency,
        ref_phase=ref.phase,
        d_kind=d_tab[0],
        d_a=d_tab[1],
        d_b=d_tab[2],
        d_c=d_tab[3],
        d_idx=d_tab[4],
        d_eq=d_tab[5],
        mu=cfg.mu,
        k_obs=cfg.k,
        observer_enabled=cfg.observer_enabled,
        x0=np.asarray(x0, dtype=np.float64).reshape(-1),
        dt=icfg.dt,
        t0=icfg.t0,
        n_steps=icfg.n_steps,
        method=INTEGRATION_METHODS.index(icfg.method),
        gain_floor=sys.gain_floor,
    )


def unpack_system(plan: SimPlan) -> StrictFeedbackSystem:
    """Rebuild evaluator objects from the term tables (pure-Python backend)."""
    from ..plant import StageTerm

    kind_names = {v: k for k, v in _TERM_CODE.items()}

    def expand(kinds, coefs, idxs, off):
        exprs = []
        for s in range(plan.n):
            terms = tuple(
                StageTerm(float(coefs[t]), kind_names[int(kinds[t])], int(idxs[t]))
                for t in range(off[s], off[s + 1])
            )
            exprs.append(StageExpr(*terms))
        return tuple(exprs)

    return StrictFeedbackSystem(
        n=plan.n,
        f=expand(plan.f_kind, plan.f_coef, plan.f_idx, plan.f_off),
        b=expand(plan.b_kind, plan.b_coef, plan.b_idx, plan.b_off),
        gain_floor=plan.gain_floor,
    )


def unpack_profile(plan: SimPlan) -> DisturbanceProfile | None:
    if plan.d_kind.size == 0:
        return None
    by_eq: dict[int, list] = {}
    for t in range(plan.d_kind.size):
        kind = int(plan.d_kind[t])
        if kind == 0:
            term = Constant(float(plan.d_a[t]))
        elif kind == 1:
            term = Ramp(float(plan.d_a[t]))
        elif kind == 2:
            term = Sinusoid(float(plan.d_a[t]), float(plan.d_b[t]), float(plan.d_c[t]))
        else:
            term = SignumOfState(float(plan.d_a[t]), int(plan.d_idx[t]))
        by_eq.setdefault(int(plan.d_eq[t]), []).append(term)
    eqs = sorted(by_eq)
    return DisturbanceProfile(
        channels=tuple(tuple(by_eq[eq]) for eq in eqs),
        channel_map=tuple(eqs),
    )


def unpack_reference(plan: SimPlan) -> ReferenceSignal:
    return ReferenceSignal(plan.ref_amp, plan.ref_omega, plan.ref_phase)
