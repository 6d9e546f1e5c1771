"""Path-space Gibbs measures of the 1-D stochastic Allen-Cahn equation.

Samplers, a transfer-matrix oracle, reflections and a constrained energy
minimiser for the invariant measure of the equation with a double-well
potential.
"""
from .errors import (AcGibbsError, BudgetError, ConfigError, ContractViolation, DomainError,
                     IntegrityError, InvalidPotentialError, MigrationError, NumericalError,
                     PrecisionError)
from .potential import Potential, check_assumptions, optimal_profile, well_constants
from .path_domain import Grid, Path, StoppingSpec, detect_layers, detect_wasted_excursions, energy
from .gaussian_bridge import BridgeSpec, RandomSource, bridge_covariance, sample_bridge
from .transfer_oracle import build_transfer, event_probability_exact, marginal
from .gibbs_sampler import Ensemble, SamplerConfig, run_chain, run_chains
from .reflections import ReflectionSpec, apply_reflection, invariance_test
from .energy_min import EnergyProblem, minimize_energy, verify_energy_lemma
from .experiments import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AcGibbsError", "BudgetError", "ConfigError", "ContractViolation", "DomainError",
    "IntegrityError", "InvalidPotentialError", "MigrationError", "NumericalError",
    "PrecisionError",
    "Potential", "check_assumptions", "optimal_profile", "well_constants",
    "Grid", "Path", "StoppingSpec", "detect_layers", "detect_wasted_excursions", "energy",
    "BridgeSpec", "RandomSource", "bridge_covariance", "sample_bridge",
    "build_transfer", "event_probability_exact", "marginal",
    "Ensemble", "SamplerConfig", "run_chain", "run_chains",
    "ReflectionSpec", "apply_reflection", "invariance_test",
    "EnergyProblem", "minimize_energy", "verify_energy_lemma",
    "ExperimentConfig", "run_experiment",
    "__version__",
]
