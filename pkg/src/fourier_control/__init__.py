"""Fourier-series open-loop control optimization for bounded controls.

The reference plant is a pendulum-driven capsule with Coulomb stick-slip
friction; see :mod:`fourier_control.capsule`.
"""

from .capsule import (CapsuleParams, CapsuleState, ContactForces, MotionPhase, Trajectory,
                      nondimensionalize, progression_cost, simulate, slip_accelerations,
                      stick_accelerations, stick_break_check)
from .errors import (ConfigError, ContactLossError, DegenerateShapeError, DomainError,
                     EventError, FourierControlError, ModelSingularityError, SimulationError,
                     StepSizeUnderflowError)
from .ode import EventSpec, IntegratorSettings, VectorEvents, integrate_until_event, solve, step_rk45
from .optimizer import (BoundsVector, CapsuleProblem, DEConfig, OptimizationResult, capsule_cost,
                        optimize, optimize_capsule)
from .parametrization import (ControlBounds, ControlSpec, FourierSeriesControl, Span, SpanParams,
                              SphericalDirection, build_control, build_control_from_harmonics,
                              direction_to_cartesian, estimate_span_numeric, eval_control,
                              eval_shape_signal, normalize_shape, span_from_params)

__version__ = "0.1.0"
