"""Flux-limited diffusion, kinetic transport and upscaling laboratory."""
from .errors import (CFLViolation, FluxlimError, NegativeDensityError,
                     SingularBarrierError, ValidationError)
from .flux_lib import FluxSpec, flux_from_json, phi_from_psi, psi_example, rh_flux
from .grid import SpatialGrid
from .kinetic import (AccelSpec, KineticRun, KineticState, ScalingSpec,
                      TurningOperatorSpec, apply_turning, solve_kinetic)
from .macro_pde import MacroState, ModelSpec, SignalSpec, SolveConfig, solve
from .upscale import SweepPlan, first_order_correction_check, macro_coefficients, run_sweep
from .velocity_measure import (VelocityMeasure, VelocitySetSpec, g_of, make_discrete,
                               make_lebesgue, moment, moment_condition_test)

__version__ = "0.1.0"

__all__ = [
    "AccelSpec", "CFLViolation", "FluxSpec", "FluxlimError", "KineticRun", "KineticState",
    "MacroState", "ModelSpec", "NegativeDensityError", "ScalingSpec", "SignalSpec",
    "SingularBarrierError", "SolveConfig", "SpatialGrid", "SweepPlan", "TurningOperatorSpec",
    "ValidationError", "VelocityMeasure", "VelocitySetSpec", "apply_turning",
    "first_order_correction_check", "flux_from_json", "g_of", "macro_coefficients",
    "make_discrete", "make_lebesgue", "moment", "moment_condition_test", "phi_from_psi",
    "psi_example", "rh_flux", "run_sweep", "solve", "solve_kinetic",
]
