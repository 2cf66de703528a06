#!/usr/bin/env python3
"""
Port-Hamiltonian plant: matrices, boundary geometry and feedback closure

The system is d/dt x = P1 d/dzeta (H x) + P0 H x on (a, b) with f = H x.
All boundary matrices act on the stacked trace v = (f(b); f(a)) of length 2m.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .bv_calculus import EnergyDensity, PiecewiseMatrixDensity
from .errors import DimensionError, DomainError, NotAnEnergyDensityError
from .experiment_config import get_feedback_defaults, get_tolerance

logger = logging.getLogger(__name__)

SQRT_HALF = 1.0 / np.sqrt(2.0)

# B and C carry a factor 1/sqrt(2) each, matching the 1/2-weighted energy
IO_CONVENTION = "W_B2 and W_C scaled by 1/sqrt(2); trace v = (f(b); f(a)), f = Hx"


def _matrix(value, rows: Optional[int] = None, cols: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(value)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    if arr.size == 0 and cols is not None:
        return arr.reshape(0, cols)
    return np.atleast_2d(arr)


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().T)


def numerical_rank(W: np.ndarray) -> int:
    """Rank from singular values above rank_relative * sigma_max"""
    W = np.atleast_2d(np.asarray(W))
    if W.size == 0:
        return 0
    s = np.linalg.svd(W, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > get_tolerance('rank_relative') * s[0]))


@dataclass(frozen=True, eq=False)
class PortHamiltonianSystem:
    """Open-loop plant (P1, P0, H) with boundary matrices W_B1, W_B2, W_C"""

    P1: np.ndarray
    P0: np.ndarray
    density: EnergyDensity
    W_B1: np.ndarray
    W_B2: np.ndarray
    W_C: np.ndarray
    name: str = 'custom'
    mu_hint: Optional[float] = None

    def __post_init__(self):
        P1 = _matrix(self.P1)
        m = P1.shape[0]
        object.__setattr__(self, 'P1', P1)
        object.__setattr__(self, 'P0', _matrix(self.P0))
        object.__setattr__(self, 'W_B1', _matrix(self.W_B1, cols=2 * m))
        object.__setattr__(self, 'W_B2', _matrix(self.W_B2, cols=2 * m))
        object.__setattr__(self, 'W_C', _matrix(self.W_C, cols=2 * m))

        if P1.shape != (m, m) or self.P0.shape != (m, m):
            raise DimensionError(f"P1 and P0 must be square of the same size, got {P1.shape} and {self.P0.shape}")
        if self.density.dim != m:
            raise DimensionError(f"Density is {self.density.dim}x{self.density.dim}, expected {m}x{m}")
        k = self.W_B2.shape[0]
        if not 1 <= k <= m:
            raise DimensionError(f"Input dimension k={k} must satisfy 1 <= k <= {m}")
        expected = {'W_B1': (m - k, 2 * m), 'W_B2': (k, 2 * m), 'W_C': (k, 2 * m)}
        for key, shape in expected.items():
            if getattr(self, key).shape != shape:
                raise DimensionError(f"{key} has shape {getattr(self, key).shape}, expected {shape}")

    @property
    def m(self) -> int:
        return self.P1.shape[0]

    @property
    def k(self) -> int:
        return self.W_B2.shape[0]

    @property
    def interval(self) -> Tuple[float, float]:
        return self.density.interval

    @property
    def length(self) -> float:
        a, b = self.interval
        return b - a

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'm': self.m,
            'k': self.k,
            'interval': list(self.interval),
            'P1': np.real_if_close(self.P1).tolist(),
            'P0': np.real_if_close(self.P0).tolist(),
            'W_B1': self.W_B1.tolist(),
            'W_B2': self.W_B2.tolist(),
            'W_C': self.W_C.tolist(),
            'convention': IO_CONVENTION,
        }


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    residual: float
    detail: str = ''


@dataclass
class ValidationReport:
    system: str
    checks: List[ValidationCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[ValidationCheck]:
        return [check for check in self.checks if not check.passed]

    def get(self, name: str) -> ValidationCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'system': self.system,
            'passed': self.passed,
            'checks': [
                {'name': c.name, 'passed': c.passed, 'residual': c.residual, 'detail': c.detail}
                for c in self.checks
            ],
        }


def validate_system(sys: PortHamiltonianSystem) -> ValidationReport:
    """Check every structural invariant of the plant; failures are reported, not raised"""
    report = ValidationReport(system=sys.name)
    checks = report.checks

    residual = float(np.linalg.norm(sys.P1 - sys.P1.conj().T, 2))
    checks.append(ValidationCheck('P1 Hermitian', residual <= get_tolerance('hermitian_residual'), residual))

    s = np.linalg.svd(sys.P1, compute_uv=False)
    ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
    checks.append(ValidationCheck('P1 invertible', ratio >= get_tolerance('invertibility_relative'), ratio,
                                  'smallest over largest singular value'))

    residual = float(np.linalg.norm(sys.P0 + sys.P0.conj().T, 2))
    checks.append(ValidationCheck('P0 skew-Hermitian', residual <= get_tolerance('skew_residual'), residual))

    residual = float(sys.density.hermitian_residual())
    checks.append(ValidationCheck('density Hermitian', residual <= get_tolerance('hermitian_residual'), residual))

    try:
        m_lo, m_hi = sys.density.bounds()
        checks.append(ValidationCheck('energy density bounds', True, m_lo, f'eigenvalues in [{m_lo:.6g}, {m_hi:.6g}]'))
    except NotAnEnergyDensityError as e:
        checks.append(ValidationCheck('energy density bounds', False, float('nan'), str(e)))

    rank = numerical_rank(sys.W_B1) if sys.W_B1.shape[0] else 0
    deficit = float(sys.m - sys.k - rank)
    checks.append(ValidationCheck('W_B1 full row rank', deficit == 0, deficit, f'rank {rank} of {sys.m - sys.k}'))

    for check in report.failures():
        logger.warning("%s: check '%s' failed (residual %.3e)", sys.name, check.name, check.residual)
    return report


def boundary_form(P1, m: Optional[int] = None) -> np.ndarray:
    """Q with Re<x, Ax>_X = v* Q v for the trace v = (f(b); f(a))"""
    P1 = _matrix(P1)
    if m is not None and P1.shape != (m, m):
        raise DimensionError(f"P1 has shape {P1.shape}, expected {(m, m)}")
    sym = hermitian_part(P1)
    return 0.25 * scipy.linalg.block_diag(sym, -sym)


def trace_selector(m: int, endpoint: str) -> np.ndarray:
    """m x 2m matrix picking f(endpoint) out of (f(b); f(a))"""
    if endpoint == 'b':
        return np.hstack([np.eye(m), np.zeros((m, m))])
    if endpoint == 'a':
        return np.hstack([np.zeros((m, m)), np.eye(m)])
    raise DomainError(f"endpoint must be 'a' or 'b', got {endpoint!r}")


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """Plant closed by u = -mu y, or by an explicitly given boundary matrix"""

    base: PortHamiltonianSystem
    mu: Optional[float]
    W: np.ndarray
    label: str = ''

    @classmethod
    def from_matrix(cls, base: PortHamiltonianSystem, W, label: str = 'custom boundary') -> 'ClosedLoopSystem':
        W = _matrix(W)
        if W.shape != (base.m, 2 * base.m):
            raise DimensionError(f"W has shape {W.shape}, expected {(base.m, 2 * base.m)}")
        return cls(base=base, mu=None, W=W, label=label)

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def interval(self) -> Tuple[float, float]:
        return self.base.interval

    @property
    def rank(self) -> int:
        return numerical_rank(self.W)

    @property
    def full_rank(self) -> bool:
        return self.rank == self.m

    def with_density(self, density: EnergyDensity) -> 'ClosedLoopSystem':
        return replace(self, base=with_density(self.base, density))


def close_loop(sys: PortHamiltonianSystem, mu: Optional[float] = None) -> ClosedLoopSystem:
    """Stack W_B1 over W_B2 + mu W_C"""
    if mu is None:
        mu = sys.mu_hint if sys.mu_hint is not None else get_feedback_defaults()['mu']
    if not mu > 0:
        raise DomainError(f"Feedback gain must be positive, got {mu}")
    W = np.vstack([sys.W_B1, sys.W_B2 + mu * sys.W_C])
    closed = ClosedLoopSystem(base=sys, mu=float(mu), W=W, label=f'u = -{mu:g} y')
    if not closed.full_rank:
        logger.warning("%s closed with mu=%g has rank %d < %d", sys.name, mu, closed.rank, sys.m)
    return closed


def energy(sys: PortHamiltonianSystem, f: np.ndarray, grid=None) -> float:
    """1/2 sum_j sigma_j f_j* H_j^{-1} f_j for a nodal state f of shape (n+1, m)"""
    from .simulator import SpatialGrid

    f = np.asarray(f)
    if f.ndim != 2 or f.shape[1] != sys.m:
        raise DimensionError(f"Nodal state must have shape (n+1, {sys.m}), got {f.shape}")
    if grid is None:
        grid = SpatialGrid.build(sys.density, f.shape[0] - 1)
    elif grid.n + 1 != f.shape[0]:
        raise DimensionError(f"State has {f.shape[0]} nodes, grid has {grid.n + 1}")
    return grid.energy(f)


def with_density(sys: PortHamiltonianSystem, density: EnergyDensity) -> PortHamiltonianSystem:
    """Same plant with another energy density (e.g. a mollified one)"""
    return replace(sys, density=density)


def _scalar_density(value, interval) -> PiecewiseMatrixDensity:
    if isinstance(value, PiecewiseMatrixDensity):
        if value.dim != 1:
            raise DimensionError("Physical coefficients must be scalar densities")
        return value
    return PiecewiseMatrixDensity.constant(float(value), interval)


def _check_positive(name: str, density: PiecewiseMatrixDensity):
    try:
        density.bounds()
    except NotAnEnergyDensityError as e:
        raise NotAnEnergyDensityError(f"Coefficient {name} is not positive: {e}") from e


def string_model(rho=1.0, T=1.0, interval=(0.0, 1.0), mu_hint: Optional[float] = None) -> PortHamiltonianSystem:
    """Vibrating string clamped at a, forced and observed at b

    State x = (rho w_t, w_zeta), f = Hx = (w_t, T w_zeta). The input is the
    force T w_zeta(b) and the output the velocity w_t(b).
    """
    rho = _scalar_density(rho, interval)
    T = _scalar_density(T, rho.interval)
    _check_positive('rho', rho)
    _check_positive('T', T)
    density = PiecewiseMatrixDensity.diagonal(rho.reciprocal(), T)
    return PortHamiltonianSystem(
        P1=np.array([[0.0, 1.0], [1.0, 0.0]]),
        P0=np.zeros((2, 2)),
        density=density,
        W_B1=np.array([[0.0, 0.0, 1.0, 0.0]]),
        W_B2=SQRT_HALF * np.array([[0.0, 1.0, 0.0, 0.0]]),
        W_C=SQRT_HALF * np.array([[1.0, 0.0, 0.0, 0.0]]),
        name='string',
        mu_hint=mu_hint,
    )


def timoshenko_model(rho=1.0, EI=1.0, Ir=1.0, K=1.0, interval=(0.0, 1.0),
                     mu_hint: Optional[float] = None) -> PortHamiltonianSystem:
    """Timoshenko beam clamped at a, with force and torsional moment applied at b

    State x = (w_zeta - phi, rho w_t, phi_zeta, Ir phi_t) and H = diag(K, 1/rho, EI, 1/Ir).
    """
    rho = _scalar_density(rho, interval)
    interval = rho.interval
    EI, Ir, K = (_scalar_density(c, interval) for c in (EI, Ir, K))
    for name, coef in (('rho', rho), ('EI', EI), ('Ir', Ir), ('K', K)):
        _check_positive(name, coef)
    density = PiecewiseMatrixDensity.diagonal(K, rho.reciprocal(), EI, Ir.reciprocal())

    P1 = np.zeros((4, 4))
    P1[0, 1] = P1[1, 0] = P1[2, 3] = P1[3, 2] = 1.0
    P0 = np.zeros((4, 4))
    P0[0, 3] = -1.0
    P0[3, 0] = 1.0

    def rows(*indices):
        out = np.zeros((len(indices), 8))
        for r, i in enumerate(indices):
            out[r, i] = 1.0
        return out

    # trace indices: f(b) -> 0..3, f(a) -> 4..7
    return PortHamiltonianSystem(
        P1=P1,
        P0=P0,
        density=density,
        W_B1=rows(5, 7),
        W_B2=SQRT_HALF * rows(0, 2),
        W_C=SQRT_HALF * rows(1, 3),
        name='timoshenko',
        mu_hint=mu_hint,
    )


def clamped_string_loop(rho=1.0, T=1.0, interval=(0.0, 1.0)) -> ClosedLoopSystem:
    """Energy-conserving string with w_t = 0 at both ends"""
    base = string_model(rho, T, interval)
    W = np.array([[0.0, 0.0, 1.0, 0.0],
                  [1.0, 0.0, 0.0, 0.0]])
    return ClosedLoopSystem.from_matrix(base, W, label='clamped at a and b')
