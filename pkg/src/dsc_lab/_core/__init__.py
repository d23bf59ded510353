"""Kernel backend selection.

The hot path of the package is fixed-step closed-loop integration. It exists
twice: a Cython extension (``_fastloop``) and a pure-Python fallback
(``_pyloop``) with identical plan-level semantics. The compiled backend is
picked at import time when present; ``DSC_LAB_BACKEND`` forces the choice
("compiled", "python", or the default "auto"). ``benchmarks/bench_backends.py``
compares the two.
"""

from __future__ import annotations

import os

from ..errors import ConfigError
from . import _pyloop
from .plan import (
    MAX_KERNEL_ORDER,
    SimPlan,
    try_build_backstepping_plan,
    try_build_dsc_plan,
)

try:
    from . import _fastloop  # type: ignore[attr-defined]
except ImportError:  # extension not built; fall back to pure Python
    _fastloop = None

_CHOICE = os.environ.get("DSC_LAB_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "compiled", "python"):
    raise ConfigError(
        f"DSC_LAB_BACKEND={_CHOICE!r} not recognized; "
        "use 'auto', 'compiled', or 'python'"
    )
if _CHOICE == "compiled" and _fastloop is None:
    raise ConfigError(
        "DSC_LAB_BACKEND=compiled but the extension is not built; "
        "reinstall with a C compiler and Cython available"
    )

_ACTIVE = _pyloop if (_CHOICE == "python" or _fastloop is None) else _fastloop


def backend_name() -> str:
    """Name of the kernel backend in use ('compiled' or 'python')."""
    return "compiled" if _ACTIVE is _fastloop and _fastloop is not None else "python"


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _fastloop is not None else ("python",)


def run_plan(plan: SimPlan) -> dict:
    """Execute a packed simulation plan on the active backend."""
    return _ACTIVE.run_plan(plan)


def run_plan_on(plan: SimPlan, backend: str) -> dict:
    """Execute on an explicit backend (used by tests and benchmarks)."""
    if backend == "python":
        return _pyloop.run_plan(plan)
    if backend == "compiled":
        if _fastloop is None:
            raise ConfigError("compiled backend is not available")
        return _fastloop.run_plan(plan)
    raise ConfigError(f"unknown backend {backend!r}")


__all__ = [
    "MAX_KERNEL_ORDER",
    "SimPlan",
    "available_backends",
    "backend_name",
    "run_plan",
    "run_plan_on",
    "try_build_backstepping_plan",
    "try_build_dsc_plan",
]
