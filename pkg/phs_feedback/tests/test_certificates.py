#!/usr/bin/env python3
"""
Test the decay-certificate constant chain
"""

import math

import numpy as np
import pytest

from phs_feedback import certificates
from phs_feedback.bv_calculus import PiecewiseMatrixDensity
from phs_feedback.certificates import (
    FORMULAS,
    SHARPENED_KAPPA,
    decay_certificate,
    energy_envelope,
    evaluate_chain,
    sharpened_certificate,
)
from phs_feedback.conditions import check_conditions
from phs_feedback.errors import DomainError, HypothesisError
from phs_feedback.phs_model import SQRT_HALF, PortHamiltonianSystem, string_model


def port_weighted_string(t):
    """Unit string with input t f2(b)/sqrt2 and output f1(b)/(t sqrt2); lambda = min(t^2, 1/t^2)/2"""
    return PortHamiltonianSystem(
        P1=[[0.0, 1.0], [1.0, 0.0]],
        P0=np.zeros((2, 2)),
        density=PiecewiseMatrixDensity.constant(np.eye(2)),
        W_B1=np.array([[0.0, 0.0, 1.0, 0.0]]),
        W_B2=t * SQRT_HALF * np.array([[0.0, 1.0, 0.0, 0.0]]),
        W_C=SQRT_HALF / t * np.array([[1.0, 0.0, 0.0, 0.0]]),
    )


class TestChain:

    def test_constant_string_matched_gain(self, string_system):
        cert = decay_certificate(string_system, 1.0)
        assert cert.gamma0 == pytest.approx(1.0)
        assert cert.kappa0 == pytest.approx(2.0)
        assert cert.t0 == pytest.approx(3.0)
        assert cert.C0 == pytest.approx(math.exp(2.0) / 2.0, rel=1e-14)
        assert cert.lam == pytest.approx(0.5)
        assert cert.kappa == pytest.approx(0.25)
        assert cert.mu0 == pytest.approx(0.938508, abs=1e-6)
        assert cert.M0 == pytest.approx(1.0 / cert.mu0, rel=1e-14)
        assert cert.M0 == pytest.approx(1.065521, abs=1e-6)
        assert cert.omega0 == pytest.approx(-0.0211547, abs=1e-7)
        assert cert.endpoint == 'b'
        assert cert.kind == 'analytic'

    def test_constant_string_high_gain(self, string_system):
        cert = decay_certificate(string_system, 2.0)
        assert cert.kappa == pytest.approx(0.125)
        assert cert.mu0 == pytest.approx(0.967792, abs=1e-6)
        assert cert.omega0 == pytest.approx(-0.010913, abs=1e-6)

    def test_bv_string(self, bv_string_system):
        cert = decay_certificate(bv_string_system, 1.0)
        assert cert.m_lo == pytest.approx(0.25)
        assert cert.m_hi_prime == pytest.approx(2.75)
        assert cert.gamma0 == pytest.approx(4.0)
        assert cert.kappa0 == pytest.approx(11.0)
        assert cert.t0 == pytest.approx(9.0)
        assert cert.C0 == pytest.approx(2.0 * math.exp(11.0), rel=1e-13)
        # mu0 rounds to 1 but omega0 keeps its digits
        assert cert.omega0 < 0
        assert cert.omega0 == pytest.approx(-1.0 / (72.0 * math.exp(11.0)), rel=1e-6)

    def test_timoshenko(self, timoshenko_system):
        cert = decay_certificate(timoshenko_system, 1.0)
        assert cert.norm_P1_inv_P0 == pytest.approx(1.0)
        assert cert.kappa0 == pytest.approx(4.0)
        assert cert.C0 == pytest.approx(math.exp(4.0) / 2.0, rel=1e-14)

    @pytest.mark.parametrize("mu", [0.5, 1.0, 2.0])
    def test_verify_residuals(self, bv_string_system, mu):
        residuals = decay_certificate(bv_string_system, mu).verify()
        assert set(residuals) == {'gamma0', 'kappa0', 't0', 'C0', 'mu0', 'M0', 'omega0'}
        assert max(residuals.values()) <= 1e-14

    def test_document(self, string_system):
        document = decay_certificate(string_system, 1.0).to_dict()
        assert document['formulas'] == FORMULAS
        assert 'semigroup_constant_M' in document
        assert document['omega0'] == pytest.approx(-0.0211547, abs=1e-7)

    def test_nonpositive_kappa(self, string_system):
        with pytest.raises(HypothesisError):
            evaluate_chain(string_system, 0.5, 0.0, 1.0, 'b')


class TestMonotonicity:

    def test_matched_gain_is_optimal(self, string_system):
        omegas = {2.0 ** i: decay_certificate(string_system, 2.0 ** i).omega0 for i in range(-3, 4)}
        assert min(omegas, key=omegas.get) == 1.0
        for i in range(1, 4):
            assert omegas[2.0 ** i] == pytest.approx(omegas[2.0 ** -i], rel=1e-12)

    def test_larger_lambda_decays_faster(self):
        omegas = []
        for t in (0.25, 0.5, 1.0):
            system = port_weighted_string(t)
            assert check_conditions(system, 1.0).hypotheses_hold
            cert = decay_certificate(system, 1.0)
            assert cert.lam == pytest.approx(t * t / 2.0, rel=1e-6)
            omegas.append(cert.omega0)
        assert all(later < earlier for earlier, later in zip(omegas, omegas[1:]))

    def test_larger_jump_decays_slower(self):
        rates = []
        for r in (1.0, 2.0, 4.0):
            rho = PiecewiseMatrixDensity.scalar_steps([1.0, r], [0.0, 0.5, 1.0])
            rates.append(abs(decay_certificate(string_model(rho, 1.0), 1.0).omega0))
        assert rates[0] > rates[1] > rates[2] > 0


class TestHypotheses:

    def test_active_plant(self):
        sys = PortHamiltonianSystem(
            P1=[[0.0, 1.0], [1.0, 0.0]],
            P0=np.zeros((2, 2)),
            density=PiecewiseMatrixDensity.constant(np.eye(2)),
            W_B1=np.array([[0.0, 0.0, 1.0, 0.0]]),
            W_B2=SQRT_HALF * np.array([[0.0, 1.0, 0.0, 0.0]]),
            W_C=SQRT_HALF * np.array([[1.0, -0.5, 0.0, 0.0]]),
        )
        with pytest.raises(HypothesisError, match=r"hypothesis \(i\)"):
            decay_certificate(sys, 1.0)

    def test_missing_domination(self, string_system, monkeypatch):
        monkeypatch.setattr(certificates, 'trace_domination', lambda sys: (0.0, None))
        with pytest.raises(HypothesisError, match=r"hypothesis \(ii\)"):
            decay_certificate(string_system, 1.0)

    def test_exit_code(self, string_system, monkeypatch):
        monkeypatch.setattr(certificates, 'trace_domination', lambda sys: (0.0, None))
        with pytest.raises(HypothesisError) as info:
            decay_certificate(string_system, 1.0)
        assert info.value.exit_code == 2

    @pytest.mark.parametrize("mu", [0.0, -2.0])
    def test_bad_gain(self, string_system, mu):
        with pytest.raises(DomainError):
            decay_certificate(string_system, mu)


class TestSharpened:

    def test_matched_gain_agrees(self, string_system):
        analytic = decay_certificate(string_system, 1.0)
        sharp = sharpened_certificate(string_system, 1.0)
        assert sharp.kind == 'sharpened'
        assert sharp.kappa == pytest.approx(analytic.kappa, rel=1e-10)
        assert sharp.omega0 == pytest.approx(analytic.omega0, rel=1e-8)

    def test_high_gain_improves(self, string_system):
        analytic = decay_certificate(string_system, 2.0)
        sharp = sharpened_certificate(string_system, 2.0)
        assert sharp.kappa == pytest.approx(0.2, rel=1e-10)
        assert sharp.omega0 < analytic.omega0
        assert sharp.to_dict()['formulas']['kappa'] == SHARPENED_KAPPA


class TestEnvelope:

    def test_scalar_and_array(self, string_system):
        cert = decay_certificate(string_system, 1.0)
        assert energy_envelope(cert, 1.0, 0.0) == pytest.approx(cert.M0 ** 2)
        t = np.linspace(0.0, 10.0, 11)
        values = energy_envelope(cert, 2.0, t)
        assert values.shape == t.shape
        assert np.all(np.diff(values) < 0)
        assert values[-1] == pytest.approx(2.0 * cert.M0 ** 2 * math.exp(20.0 * cert.omega0))

    def test_zero_energy(self, string_system):
        assert energy_envelope(decay_certificate(string_system, 1.0), 0.0, 5.0) == 0.0

    def test_rejects_negative_inputs(self, string_system):
        cert = decay_certificate(string_system, 1.0)
        with pytest.raises(DomainError):
            energy_envelope(cert, -1.0, 1.0)
        with pytest.raises(DomainError):
            energy_envelope(cert, 1.0, [0.0, -1.0])
