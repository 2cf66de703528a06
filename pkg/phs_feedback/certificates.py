#!/usr/bin/env python3
"""
Explicit exponential-decay certificates

A certificate evaluates the constant chain

    gamma0 = ||P1^-1|| / m_lo
    kappa0 = (2 ||P1^-1 P0|| m_hi + m_hi') / m_lo
    t0     = 2 gamma0 (b - a) + 1
    C0     = exp(kappa0 (b - a)) (b - a) / (2 m_lo)
    kappa  = lambda min(1/(2 mu), mu/2)
    mu0    = sqrt(x / (1 + x)),  x = C0 / (2 kappa)
    M0     = 1 / mu0
    omega0 = log(mu0) / t0

from system data alone, giving ||e^{At}|| <= M0 e^{omega0 t}. All norms are
operator 2-norms.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np

from .conditions import check_dissipative, check_impedance_passive, trace_domination
from .errors import DomainError, HypothesisError
from .phs_model import IO_CONVENTION, PortHamiltonianSystem, close_loop

logger = logging.getLogger(__name__)

FORMULAS = {
    'gamma0': '||P1^-1|| / m_lo',
    'kappa0': '(2 ||P1^-1 P0|| m_hi + m_hi_prime) / m_lo',
    't0': '2 gamma0 (b - a) + 1',
    'C0': 'exp(kappa0 (b - a)) (b - a) / (2 m_lo)',
    'kappa': 'lambda min(1/(2 mu), mu/2)',
    'mu0': 'sqrt(x / (1 + x)), x = C0 / (2 kappa)',
    'M0': '1 / mu0',
    'omega0': 'log(mu0) / t0',
}

SHARPENED_KAPPA = 'kappa_best from the closed-loop dissipativity check (extension)'


@dataclass(frozen=True)
class DecayCertificate:
    m_lo: float
    m_hi: float
    m_hi_prime: float
    norm_P1_inv: float
    norm_P1_inv_P0: float
    length: float
    gamma0: float
    kappa0: float
    t0: float
    C0: float
    lam: float
    kappa: float
    mu0: float
    M0: float
    omega0: float
    endpoint: str
    mu: float
    kind: str = 'analytic'
    convention: str = IO_CONVENTION

    def recompute(self) -> Dict[str, float]:
        """Re-evaluate every derived constant from the recorded inputs"""
        return _chain(self.m_lo, self.m_hi, self.m_hi_prime, self.norm_P1_inv, self.norm_P1_inv_P0,
                      self.length, self.kappa)

    def verify(self) -> Dict[str, float]:
        """Relative residual of each derived field against its formula"""
        residuals = {}
        for name, expected in self.recompute().items():
            actual = getattr(self, name)
            residuals[name] = abs(actual - expected) / max(abs(expected), np.finfo(float).tiny)
        return residuals

    def to_dict(self) -> dict:
        data = asdict(self)
        data['formulas'] = dict(FORMULAS)
        if self.kind == 'sharpened':
            data['formulas']['kappa'] = SHARPENED_KAPPA
        data['semigroup_constant_M'] = 'M = M0 (norm equivalence constants of the approximants are 1)'
        return data


def _chain(m_lo, m_hi, m_hi_prime, norm_P1_inv, norm_P1_inv_P0, length, kappa) -> Dict[str, float]:
    gamma0 = norm_P1_inv / m_lo
    kappa0 = (2.0 * norm_P1_inv_P0 * m_hi + m_hi_prime) / m_lo
    t0 = 2.0 * gamma0 * length + 1.0
    C0 = math.exp(kappa0 * length) * length / (2.0 * m_lo)
    x = C0 / (2.0 * kappa)
    mu0 = math.sqrt(x / (1.0 + x))
    # log(mu0) = -log1p(1/x)/2 keeps omega0 accurate when mu0 is close to 1
    omega0 = -0.5 * math.log1p(1.0 / x) / t0
    return {'gamma0': gamma0, 'kappa0': kappa0, 't0': t0, 'C0': C0,
            'mu0': mu0, 'M0': 1.0 / mu0, 'omega0': omega0}


def evaluate_chain(sys: PortHamiltonianSystem, lam: float, kappa: float, mu: float, endpoint: str,
                   kind: str = 'analytic') -> DecayCertificate:
    """Certificate for a given dissipation constant kappa"""
    if not kappa > 0:
        raise HypothesisError(f"Dissipation constant must be positive, got {kappa}")
    m_lo, m_hi = sys.density.bounds()
    P1_inv = np.linalg.inv(sys.P1)
    norm_P1_inv = float(np.linalg.norm(P1_inv, 2))
    norm_P1_inv_P0 = float(np.linalg.norm(P1_inv @ sys.P0, 2))
    length = sys.length
    m_hi_prime = float(sys.density.mbar_prime())
    chain = _chain(m_lo, m_hi, m_hi_prime, norm_P1_inv, norm_P1_inv_P0, length, kappa)
    cert = DecayCertificate(
        m_lo=m_lo, m_hi=m_hi, m_hi_prime=m_hi_prime,
        norm_P1_inv=norm_P1_inv, norm_P1_inv_P0=norm_P1_inv_P0, length=length,
        lam=float(lam), kappa=float(kappa), endpoint=endpoint, mu=float(mu), kind=kind,
        **chain,
    )
    logger.info("%s certificate for %s at mu=%g: M0=%.6g omega0=%.6g",
                kind, sys.name, mu, cert.M0, cert.omega0)
    return cert


def decay_certificate(sys: PortHamiltonianSystem, mu: float) -> DecayCertificate:
    """Certificate with kappa = lambda min(1/(2 mu), mu/2)"""
    if not mu > 0:
        raise DomainError(f"Feedback gain must be positive, got {mu}")
    passive, residual, _ = check_impedance_passive(sys)
    if not passive:
        raise HypothesisError(f"hypothesis (i) fails: impedance passivity residual {residual:.3e}")
    lam, endpoint = trace_domination(sys)
    if lam <= 0:
        raise HypothesisError("hypothesis (ii) fails: no endpoint trace is dominated by |Bx|^2 + |Cx|^2")
    kappa = lam * min(1.0 / (2.0 * mu), mu / 2.0)
    return evaluate_chain(sys, lam, kappa, mu, endpoint)


def sharpened_certificate(sys: PortHamiltonianSystem, mu: float) -> DecayCertificate:
    """Certificate using the exact closed-loop dissipation constant instead of the analytic one"""
    analytic = decay_certificate(sys, mu)
    dissipative, kappa_best, endpoint = check_dissipative(close_loop(sys, mu))
    if not dissipative:
        raise HypothesisError(f"closed loop is not strictly dissipative (kappa_best={kappa_best:.3e})")
    if math.isinf(kappa_best):
        logger.warning("kappa_best is unbounded; keeping the analytic constant")
        return analytic
    return evaluate_chain(sys, analytic.lam, kappa_best, mu, endpoint, kind='sharpened')


def energy_envelope(cert: DecayCertificate, E0: float, t) -> np.ndarray:
    """M0^2 exp(2 omega0 t) E0"""
    t = np.asarray(t, dtype=float)
    if E0 < 0:
        raise DomainError(f"Initial energy must be nonnegative, got {E0}")
    if np.any(t < 0):
        raise DomainError("Envelope is only defined for t >= 0")
    out = cert.M0 ** 2 * np.exp(2.0 * cert.omega0 * t) * E0
    return float(out) if out.ndim == 0 else out
