"""Stochastic heat equation with fractional noise: fBm synthesis, Green's
functions, fractional norms and a Picard solver for the mild formulation."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, PicardDivergence
from .fbm import FbmPath, fbm_covariance, generate_paths, seminorm_alpha0
from .fractional import Field, bound_rhs, norm_alpha1, norm_alpha_inf, norm_sup, young_integral
from .green import GreenTable, build_propagator, green_apply, spectral_kernel, verify_kernel_estimate
from .grids import SpaceGrid, TimeGrid
from .noise import NoiseBasis, NoiseField, build_noise, xi_statistic
from .presets import Coefficient, InitialPreset, ScalarPreset
from .solver import ProblemSpec, SolverReport, picard_solve, solve, uniqueness_check

__all__ = [
    "ConfigError", "DomainError", "PicardDivergence",
    "FbmPath", "fbm_covariance", "generate_paths", "seminorm_alpha0",
    "Field", "bound_rhs", "norm_alpha1", "norm_alpha_inf", "norm_sup", "young_integral",
    "GreenTable", "build_propagator", "green_apply", "spectral_kernel", "verify_kernel_estimate",
    "SpaceGrid", "TimeGrid",
    "NoiseBasis", "NoiseField", "build_noise", "xi_statistic",
    "Coefficient", "InitialPreset", "ScalarPreset",
    "ProblemSpec", "SolverReport", "picard_solve", "solve", "uniqueness_check",
]
