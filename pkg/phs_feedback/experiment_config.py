#!/usr/bin/env python3
"""
Configuration for boundary-feedback experiments

Module-level default dictionaries with small getters, plus loading and schema
validation of the TOML experiment files found in ``templates/``.
"""

import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .errors import ConfigError, DimensionError, PHSError

# Numerical defaults
NUMERICS_DEFAULTS = {
    'nodes': 400,  # spatial cells n
    'dt': None,  # None means h/2
    't_final': 10.0,
    'mollify_eps': None,
    'min_nodes': 8,
    'gauss_points_per_piece': 64,  # eigenvalue scan in bounds()
    'max_piece_degree': 8,
    'mollifier_quadrature_nodes': 64,  # Gauss-Legendre nodes per kernel subinterval
    'mollifier_samples_per_eps': 64,  # kernel resolved by at least 128 samples
    'mollifier_min_samples': 2049,
    'mollifier_chunk': 128,
    'reciprocal_max_depth': 12,
}

# Tolerances shared by the checks
TOLERANCES = {
    'hermitian_residual': 1e-12,
    'skew_residual': 1e-12,
    'invertibility_relative': 1e-12,
    'rank_relative': 1e-10,
    'kernel_residual': 1e-12,
    'psd_relative': 1e-12,
    'preserving_residual': 1e-12,
    'variation_epsrel': 1e-10,
    'reciprocal_relative': 1e-12,
    'projector_residual': 1e-10,
    'dissipation_relative': 1e-10,
    'envelope_slack': 1e-6,
    'spectrum_dimension_cap': 5000,
    'min_window_samples': 8,
    'min_fit_samples': 8,
}

# Feedback and sweep defaults
FEEDBACK_DEFAULTS = {
    'mu': 1.0,
    'sweep_mu_min': 0.25,
    'sweep_mu_max': 4.0,
    'sweep_steps': 9,
    'sweep_fit_window': (1.0, 10.0),
}

# Output settings
OUTPUT_DEFAULTS = {
    'directory': 'results',
    'dump_every': 0,  # 0 disables the nodal dump
    'float_format': '%.17g',
}

# Feature flags
FEATURE_FLAGS = {
    'enable_parallel_sweep': True,
    'enable_progress_bar': False,
    'emit_sharpened_certificate': True,
}

MODEL_DENSITIES = {
    'string': ('rho', 'T'),
    'timoshenko': ('rho', 'EI', 'Ir', 'K'),
    'custom': ('H',),
}

BUMP_FIELDS = ('component', 'amplitude', 'center', 'width')


def get_numerics_defaults() -> dict:
    """Get numerical defaults"""
    return NUMERICS_DEFAULTS


def get_tolerance(name: str) -> float:
    """Get a named tolerance"""
    return TOLERANCES[name]


def get_feedback_defaults() -> dict:
    """Get feedback and sweep defaults"""
    return FEEDBACK_DEFAULTS


def is_feature_enabled(feature: str) -> bool:
    """Check if a feature is enabled"""
    return FEATURE_FLAGS.get(feature, False)


@dataclass
class GaussianBump:
    component: int  # 1-based index into f = Hx
    amplitude: float
    center: float
    width: float


@dataclass
class Numerics:
    nodes: int = NUMERICS_DEFAULTS['nodes']
    dt: Optional[float] = None
    t_final: float = NUMERICS_DEFAULTS['t_final']
    mollify_eps: Optional[float] = None

    def time_step(self, length: float) -> float:
        """Time step, defaulting to half the grid spacing"""
        if self.dt is not None:
            return self.dt
        return 0.5 * length / self.nodes


@dataclass
class ExperimentConfig:
    model: str
    interval: tuple
    densities: Dict[str, Any]
    mu: float = FEEDBACK_DEFAULTS['mu']
    matrices: Dict[str, Any] = field(default_factory=dict)
    initial_condition: List[GaussianBump] = field(default_factory=list)
    numerics: Numerics = field(default_factory=Numerics)
    outputs: Dict[str, Any] = field(default_factory=lambda: dict(OUTPUT_DEFAULTS))

    def to_dict(self) -> dict:
        """Echo of the normalized configuration, embedded in JSON reports"""
        data = asdict(self)
        data['interval'] = list(self.interval)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ExperimentConfig':
        data = dict(data)
        bumps = [GaussianBump(**b) for b in data.pop('initial_condition', [])]
        numerics = Numerics(**data.pop('numerics', {}))
        interval = tuple(float(v) for v in data.pop('interval'))
        return cls(interval=interval, initial_condition=bumps, numerics=numerics, **data)

    def build_density(self, name: str):
        """Build the PiecewiseMatrixDensity declared under [densities.<name>]"""
        from .bv_calculus import PiecewiseMatrixDensity

        spec = self.densities[name]
        if 'value' in spec:
            return PiecewiseMatrixDensity.constant(spec['value'], self.interval)
        return PiecewiseMatrixDensity.from_pieces(spec['breakpoints'], spec['pieces'])

    def build_system(self):
        """Build the open-loop plant this configuration describes"""
        from .phs_model import PortHamiltonianSystem, string_model, timoshenko_model

        if self.model == 'string':
            return string_model(self.build_density('rho'), self.build_density('T'))
        if self.model == 'timoshenko':
            return timoshenko_model(self.build_density('rho'), self.build_density('EI'),
                                    self.build_density('Ir'), self.build_density('K'))
        mats = self.matrices
        m, k = int(mats['m']), int(mats['k'])
        declared = {'P1': (m, m), 'P0': (m, m), 'W_B1': (m - k, 2 * m), 'W_B2': (k, 2 * m), 'W_C': (k, 2 * m)}
        for key, shape in declared.items():
            arr = np.asarray(mats[key])
            if arr.size == 0:
                arr = arr.reshape(0, shape[1])
            if arr.shape != shape:
                raise DimensionError(f"{key} has shape {arr.shape}, expected {shape} for m={m}, k={k}")
        return PortHamiltonianSystem(
            P1=mats['P1'], P0=mats['P0'], density=self.build_density('H'),
            W_B1=mats['W_B1'], W_B2=mats['W_B2'], W_C=mats['W_C'], name='custom',
        )


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_numeric_array(value: Any) -> bool:
    """A number or a rectangular nested list of numbers"""
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        return False
    return bool(np.all(np.isfinite(array)))


def _validate_bumps(bumps: Any) -> List[str]:
    if not isinstance(bumps, list):
        return ["Field 'initial_condition' must be an array of tables"]
    errors = []
    for i, bump in enumerate(bumps):
        if not isinstance(bump, dict):
            errors.append(f"initial_condition[{i}] must be a table")
            continue
        unknown = sorted(set(bump) - set(BUMP_FIELDS))
        if unknown:
            errors.append(f"initial_condition[{i}]: unknown keys {unknown}, expected {list(BUMP_FIELDS)}")
        for key in BUMP_FIELDS:
            if key not in bump:
                errors.append(f"initial_condition[{i}] missing '{key}'")
            elif not _is_number(bump[key]):
                errors.append(f"initial_condition[{i}].{key} must be a number, got {bump[key]!r}")
        component = bump.get('component')
        if _is_number(component) and (not isinstance(component, int) or component < 1):
            errors.append(f"initial_condition[{i}].component must be an integer >= 1")
        width = bump.get('width')
        if _is_number(width) and width <= 0:
            errors.append(f"initial_condition[{i}]: Gaussian width must be > 0")
    return errors


def _validate_density(name: str, spec: Any, interval: tuple) -> List[str]:
    errors = []
    if not isinstance(spec, dict):
        return [f"Density '{name}' must be a table"]
    if 'value' in spec:
        if not _is_numeric_array(spec['value']):
            errors.append(f"Density '{name}': 'value' must be a number or a numeric matrix")
        return errors
    if 'breakpoints' not in spec or 'pieces' not in spec:
        return [f"Density '{name}' needs either 'value' or 'breakpoints' and 'pieces'"]
    if not isinstance(spec['pieces'], list):
        return [f"Density '{name}': 'pieces' must be an array"]
    for i, piece in enumerate(spec['pieces']):
        if not _is_numeric_array(piece):
            errors.append(f"Density '{name}': piece {i} must hold numeric coefficients of one shape")
    bps = spec['breakpoints']
    try:
        bps = [float(v) for v in bps]
    except (TypeError, ValueError):
        return [f"Density '{name}' has non-numeric breakpoints"]
    if any(hi <= lo for lo, hi in zip(bps, bps[1:])):
        errors.append(f"Density '{name}': breakpoints must be strictly increasing")
    if len(bps) >= 2 and (abs(bps[0] - interval[0]) > 0 or abs(bps[-1] - interval[1]) > 0):
        errors.append(f"Density '{name}': breakpoints must start at {interval[0]} and end at {interval[1]}")
    if len(spec['pieces']) != len(bps) - 1:
        errors.append(f"Density '{name}': expected {len(bps) - 1} pieces, got {len(spec['pieces'])}")
    return errors


def validate_config_structure(data: dict) -> List[str]:
    """Validate that a parsed TOML document has the required structure"""
    errors = []

    if not isinstance(data, dict):
        return ["Configuration must be a TOML table"]

    model = data.get('model')
    if model not in MODEL_DENSITIES:
        errors.append(f"Field 'model' must be one of {sorted(MODEL_DENSITIES)}, got {model!r}")
        return errors

    interval = data.get('interval', [0.0, 1.0])
    try:
        a, b = (float(v) for v in interval)
        if not a < b:
            errors.append("Field 'interval' must satisfy a < b")
    except (TypeError, ValueError):
        errors.append("Field 'interval' must be a pair of numbers")
        return errors

    densities = data.get('densities', {})
    for name in MODEL_DENSITIES[model]:
        if name not in densities:
            errors.append(f"Missing density 'densities.{name}' for model '{model}'")
        else:
            errors.extend(_validate_density(name, densities[name], (a, b)))

    if model == 'custom':
        for key in ('m', 'k', 'P1', 'P0', 'W_B1', 'W_B2', 'W_C'):
            if key not in data:
                errors.append(f"Missing field '{key}' for a custom model")

    mu = data.get('mu', FEEDBACK_DEFAULTS['mu'])
    if not _is_number(mu) or mu <= 0:
        errors.append("Field 'mu' must be a positive number")

    errors.extend(_validate_bumps(data.get('initial_condition', [])))

    numerics = data.get('numerics', {})
    nodes = numerics.get('nodes', NUMERICS_DEFAULTS['nodes'])
    if not isinstance(nodes, int) or nodes < NUMERICS_DEFAULTS['min_nodes']:
        errors.append(f"numerics.nodes must be an integer >= {NUMERICS_DEFAULTS['min_nodes']}")
    for key in ('dt', 't_final', 'mollify_eps'):
        value = numerics.get(key)
        if value is not None and (not _is_number(value) or value <= 0):
            errors.append(f"numerics.{key} must be a positive number")

    return errors


def config_from_document(data: dict) -> ExperimentConfig:
    """Normalize a validated TOML document into an ExperimentConfig"""
    model = data['model']
    interval = tuple(float(v) for v in data.get('interval', [0.0, 1.0]))
    numerics = Numerics(**{k: v for k, v in data.get('numerics', {}).items()
                           if k in ('nodes', 'dt', 't_final', 'mollify_eps')})
    outputs = dict(OUTPUT_DEFAULTS)
    outputs.update(data.get('outputs', {}))
    matrices = {}
    if model == 'custom':
        matrices = {key: data[key] for key in ('m', 'k', 'P1', 'P0', 'W_B1', 'W_B2', 'W_C')}
    return ExperimentConfig(
        model=model,
        interval=interval,
        densities={name: dict(data['densities'][name]) for name in MODEL_DENSITIES[model]},
        mu=float(data.get('mu', FEEDBACK_DEFAULTS['mu'])),
        matrices=matrices,
        initial_condition=[GaussianBump(**b) for b in data.get('initial_condition', [])],
        numerics=numerics,
        outputs=outputs,
    )


def merge_overrides(data: dict, overrides: Optional[dict]) -> dict:
    """Apply command-line overrides; None values are ignored"""
    if not overrides:
        return data
    merged = dict(data)
    for key, value in overrides.items():
        if isinstance(value, dict):
            section = dict(merged.get(key, {}))
            section.update({k: v for k, v in value.items() if v is not None})
            merged[key] = section
        elif value is not None:
            merged[key] = value
    return merged


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Load, default-fill and validate an experiment configuration"""
    path = Path(path)
    try:
        with open(path, 'rb') as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        # the decoder message already names line and column
        raise ConfigError(f"Invalid TOML in {path}: {e}")
    data = merge_overrides(data, overrides)

    errors = validate_config_structure(data)
    if errors:
        raise ConfigError(f"Schema violation in {path}: {errors[0]}", errors)

    from .phs_model import validate_system

    try:
        config = config_from_document(data)
        system = config.build_system()
    except PHSError as e:
        raise ConfigError(f"Cannot build system from {path}: {e}", [str(e)])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Malformed entry in {path}: {e}", [str(e)])
    report = validate_system(system)
    if not report.passed:
        errors = [f"{check.name} residual {check.residual:.3e}" for check in report.failures()]
        raise ConfigError(f"System in {path} fails validation: {errors[0]}", errors)

    if config.numerics.dt is None:
        a, b = config.interval
        config.numerics.dt = config.numerics.time_step(b - a)
    if not math.isfinite(config.numerics.t_final):
        raise ConfigError("numerics.t_final must be finite")
    return config
