"""Matrix-free linearized Bayesian inversion over FEM parameter fields."""

from .errors import (ConfigError, InvalidParameterError, MissingArtifactError,
                     SolverFailure, StabilityError)
from .fem import (AnisotropySpec, MassSpace, Mesh, apply_adjoint, assemble_mass,
                  assemble_prior_stiffness, assemble_weighted_gradient_stiffness,
                  build_mesh, radial_anisotropy_tensor, solve_spd)
from .lowrank import (EigenDecomposition, LowRankPosterior, SamplingFactor,
                      lanczos_eigs, prior_preconditioned_hessian,
                      truncation_error_bound)
from .map_solver import MapResult, MapSolverConfig, find_map, gradient, objective
from .models import (ForwardModel, LinearMapModel, ObservationSetup, SourceSpec,
                     StateHistory, WaveConfig, WaveModel, energy_history,
                     solve_adjoint, solve_forward, solve_incremental_adjoint,
                     solve_incremental_forward, synthesize_data)
from .pipeline import PipelineConfig, RunArtifacts, run_pipeline
from .prior import PriorModel, build_prior, covariance_function

__all__ = [
    "AnisotropySpec", "ConfigError", "EigenDecomposition", "ForwardModel",
    "InvalidParameterError", "LinearMapModel", "LowRankPosterior", "MapResult",
    "MapSolverConfig", "MassSpace", "Mesh", "MissingArtifactError",
    "ObservationSetup", "PipelineConfig", "PriorModel", "RunArtifacts",
    "SamplingFactor", "SolverFailure", "SourceSpec", "StabilityError",
    "StateHistory", "WaveConfig", "WaveModel", "apply_adjoint", "assemble_mass",
    "assemble_prior_stiffness", "assemble_weighted_gradient_stiffness",
    "build_mesh", "build_prior", "covariance_function", "energy_history",
    "find_map", "gradient", "lanczos_eigs", "objective",
    "prior_preconditioned_hessian", "radial_anisotropy_tensor", "run_pipeline",
    "solve_adjoint", "solve_forward", "solve_incremental_adjoint",
    "solve_incremental_forward", "solve_spd", "synthesize_data",
    "truncation_error_bound",
]
