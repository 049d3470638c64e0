"""Ripple-free torque control of multi-phase permanent-magnet motors.

Coil current waveforms are synthesized as trigonometric polynomials whose
combined torque is constant, with current (and optionally voltage) limits
certified by sum-of-squares Gram matrices; a feedback law built on them
linearizes the speed dynamics.
"""

from .controller import FeedbackLaw, current_refs, voltage_refs
from .model import MotorParams, electromagnetic_torque, full_rhs, reduced_rhs
from .robust import DisturbanceBounds, disturbance_bound, operating_bounds, validate_offset
from .sim import DisturbanceSpec, SimConfig, response_time, run_closed_loop, simulate_batch
from .synth import (ControlSolution, InfeasibleError, SolverError, SynthOptions,
                    build_cancellation_system, check_consistency, synthesize,
                    verify_solution)
from .trigpoly import TrigPoly, fit_fourier

__all__ = [
    "ControlSolution", "DisturbanceBounds", "DisturbanceSpec", "FeedbackLaw",
    "InfeasibleError", "MotorParams", "SimConfig", "SolverError", "SynthOptions",
    "TrigPoly", "build_cancellation_system", "check_consistency", "current_refs",
    "disturbance_bound", "electromagnetic_torque", "fit_fourier", "full_rhs",
    "operating_bounds", "reduced_rhs", "response_time", "run_closed_loop",
    "simulate_batch", "synthesize", "validate_offset", "verify_solution",
    "voltage_refs",
]
