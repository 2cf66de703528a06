#!/usr/bin/env python3
"""
phs_feedback: boundary-feedback stabilization of 1D port-Hamiltonian systems
with energy densities of bounded variation.
"""

from .bv_calculus import PiecewiseMatrixDensity, SmoothDensity, mollify
from .certificates import DecayCertificate, decay_certificate, energy_envelope, sharpened_certificate
from .conditions import (
    ConditionReport,
    check_conditions,
    check_dissipative,
    check_impedance_passive,
    kernel_basis,
    rank_check,
    trace_domination,
)
from .errors import (
    ConfigError,
    DomainError,
    HypothesisError,
    NotAnEnergyDensityError,
    NumericalError,
    PHSError,
    RankDeficientError,
)
from .experiment_config import ExperimentConfig, load_config
from .phs_model import (
    ClosedLoopSystem,
    PortHamiltonianSystem,
    boundary_form,
    clamped_string_loop,
    close_loop,
    energy,
    string_model,
    timoshenko_model,
    validate_system,
    with_density,
)
from .simulator import (
    DiscreteGenerator,
    SpatialGrid,
    Trajectory,
    check_certificate,
    discretize,
    fit_decay_rate,
    gaussian_state,
    sideways_derivative_formula,
    sideways_energy,
    sideways_monotone_profile,
    simulate,
    spectrum,
)

__version__ = '0.1.0'
