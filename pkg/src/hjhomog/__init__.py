"""Viscosity solutions of convex Hamilton-Jacobi equations on periodic
perforated domains, with oblique and prescribed-contact-angle reflection at
the holes: reflected trajectories, semi-Lagrangian value functions, metric
functions, effective Hamiltonians, and homogenization-rate experiments."""

__version__ = "0.1.0"

from .errors import (BudgetExceeded, CFLViolation, CorruptHeader,
                     DegenerateAngle, DegenerateObliqueness, EmptyBoundary,
                     GridMismatch, HjhomogError, IOFormatError, NoPath,
                     NotOnBoundary, NumericalError, OutsideValidatedRegion,
                     ProjectionDiverged, ResolutionInsufficient, StepTooLarge,
                     TableGap, Unreachable, ValidationError, VersionMismatch,
                     WindowTooSmall)
from .geometry import (ImplicitDomain, ObliqueField, ScaledDomain,
                       ball_lattice, boundary_sample, classify, free_space,
                       half_space, make_domain, normal, project_to_closure,
                       register_domain, single_ball)
from .hamiltonian import (SENTINEL, ContactAngleBC, Hamiltonian,
                          LagrangianEvaluator, ObliqueBC, boundary_operator)
from .skorokhod import (ControlSignal, ReflectedPath, residual,
                        sliding_decomposition, solve_sp)
from .sweep import (ConstantAtom, ControlNet, SlidingAtom, StencilSweep,
                    Window, build_control_net)
from .value import (InitialData, SpaceTimeGrid, ValueField,
                    discrete_comparison, dpp_residual, estimate_m0,
                    linear_initial, optimize_point, sine_initial,
                    sliding_probe, small_time_constant, solve_value)
from .metric import (EffectiveHamiltonian, EffectiveLagrangian, MetricEngine,
                     MetricSample, build_effective_table, homogenized_solve,
                     homogenized_value, translation_defect)
from .rate import (RateScenario, metric_rate_check, run_rate_experiment,
                   small_time_check, solve_strip)
from .config import (build_scenario, config_hash, load_config, parse_fraction,
                     parse_theta)
from .io import load_field, store_field, write_csv, write_json

__all__ = [name for name in dir() if not name.startswith("_")]
