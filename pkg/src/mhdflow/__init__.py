"""Pseudospectral solver and verification suite for 2D incompressible MHD
perturbed around a strong background field, in volume-preserving flow-map
form with an exactly integrated per-mode linear part."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import SimConfig, load_config
from .diagnostics import (DecayFit, EnergyRecord, energy_functional,
                          energy_identity_residual, fit_decay,
                          linear_error_metrics, msweep_slope,
                          strong_field_margin)
from .driver import (DeviationSummary, EulerianComparison, RunResult,
                     compare_eulerian, deviation_sweep, make_initial_state,
                     run_eulerian, run_flow_map)
from .errors import (CheckpointFormatError, ConfigError,
                     DataGenerationError, DegenerateGeometryError,
                     DivergenceFreeError, EllipticDivergenceError,
                     EllipticIterationError, FlowMapInversionError,
                     GridMismatchError, MhdflowError, RankError,
                     SolvabilityError, StabilityError)
from .evolve import (advective_dt_bound, default_dt, integrate_flow_map,
                     step_eulerian, step_lagrangian_damped,
                     step_lagrangian_viscous)
from .initial_data import (InitialDataSpec, ValidationReport,
                           generate_random_symmetric, generate_taylor_green,
                           validate)
from .kinematics import (GeometryBundle, build_geometry, compose_with_flow_map,
                         div_a, grad_a, invert_flow_map, lap_a,
                         magnetic_field, odevity_project, odevity_reflect,
                         odevity_residual, to_eulerian)
from .linear import (Correctors, LinearModeState, compute_correctors,
                     evolve_linear_field, evolve_mode_exact,
                     fixed_grid_propagator, flow_map_propagator)
from .pressure import (EllipticSolveReport, project_div_a_free,
                       solve_lagrangian_pressure)
from .spectral import (Grid, SpectralField, aniso_norm, dealias_product,
                       derivative, divergence, gradient, invert_laplacian,
                       leray_project, seminorm, sobolev_norm)
from .state import EulerianState, FlowMapState, StepControl

__version__ = "0.1.0"
