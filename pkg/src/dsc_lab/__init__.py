"""Simulation and tuning toolkit for dynamic surface control of
strict-feedback chains: an exact analytically-differentiated baseline, the
filtered (surface) controller with a high-gain disturbance observer, and
contraction-based estimation of the tuning constants and error bounds, plus
an experiment harness and CLI around a bench DC-motor case study.
"""

from ._core import available_backends, backend_name
from .backstepping import (
    TuningFunctions,
    VirtualControlStack,
    backstepping_control,
    simulate_backstepping,
    virtual_controls,
    z_jacobian,
)
from .contraction import (
    BoundReport,
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
from .dsc import (
    DscConfig,
    FilterBank,
    ObserverState,
    dsc_control,
    filter_dynamics,
    observer_dynamics,
    simulate_dsc,
)
from .errors import (
    ConditioningError,
    ConfigError,
    DivergenceError,
    DscLabError,
    GainFloorError,
    NumericalError,
    ShapeError,
)
from .harness import (
    ExperimentSpec,
    Metrics,
    compare_controllers,
    gain_sweep,
    preset,
    run_experiment,
    write_outputs,
)
from .numerics import (
    Box,
    IntegratorConfig,
    Trajectory,
    generalized_jacobian,
    integrate,
    jacobian_numeric,
    matrix_measure_2,
    matrix_measure_inf,
    sup_over_box,
)
from .plant import (
    Constant,
    DcMotorParams,
    DisturbanceProfile,
    Ramp,
    ReferenceSignal,
    SignumOfState,
    Sinusoid,
    StageExpr,
    StageTerm,
    StrictFeedbackSystem,
    dc_motor_system,
    disturbance_eval,
    eval_dynamics,
    reference_derivs,
)

__version__ = "0.1.0"
