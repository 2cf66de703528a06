#!/usr/bin/env python3
"""
Test the plant model: validation, boundary form, closure and energy
"""

import numpy as np
import pytest
from numpy.polynomial import polynomial as npoly

from phs_feedback.bv_calculus import PiecewiseMatrixDensity
from phs_feedback.errors import DimensionError, DomainError, NotAnEnergyDensityError
from phs_feedback.phs_model import (
    SQRT_HALF,
    ClosedLoopSystem,
    PortHamiltonianSystem,
    boundary_form,
    clamped_string_loop,
    close_loop,
    energy,
    numerical_rank,
    string_model,
    timoshenko_model,
    trace_selector,
    validate_system,
    with_density,
)


def identity_plant(P1, P0):
    return PortHamiltonianSystem(
        P1=P1,
        P0=P0,
        density=PiecewiseMatrixDensity.constant(np.eye(2)),
        W_B1=np.array([[0.0, 0.0, 1.0, 0.0]]),
        W_B2=SQRT_HALF * np.array([[0.0, 1.0, 0.0, 0.0]]),
        W_C=SQRT_HALF * np.array([[1.0, 0.0, 0.0, 0.0]]),
    )


class TestValidation:

    def test_string_passes(self, string_system):
        report = validate_system(string_system)
        assert report.passed
        assert report.failures() == []

    def test_timoshenko_passes(self, timoshenko_system):
        assert validate_system(timoshenko_system).passed

    def test_non_skew_P0_is_reported(self):
        report = validate_system(identity_plant([[0.0, 1.0], [1.0, 0.0]], np.eye(2)))
        check = report.get('P0 skew-Hermitian')
        assert not check.passed
        assert check.residual == pytest.approx(2.0)
        assert not report.passed

    def test_singular_P1_is_reported(self):
        report = validate_system(identity_plant(np.zeros((2, 2)), np.zeros((2, 2))))
        assert not report.get('P1 invertible').passed
        assert report.get('P1 Hermitian').passed

    def test_report_document(self, string_system):
        document = validate_system(string_system).to_dict()
        assert document['system'] == 'string'
        assert document['passed'] is True
        names = [c['name'] for c in document['checks']]
        assert 'energy density bounds' in names
        assert 'W_B1 full row rank' in names

    def test_unknown_check_name(self, string_system):
        with pytest.raises(KeyError):
            validate_system(string_system).get('no such check')

    def test_shape_mismatch_raises(self):
        with pytest.raises(DimensionError):
            PortHamiltonianSystem(
                P1=np.eye(2), P0=np.zeros((2, 2)),
                density=PiecewiseMatrixDensity.constant(np.eye(3)),
                W_B1=np.zeros((1, 4)), W_B2=np.zeros((1, 4)), W_C=np.zeros((1, 4)),
            )

    def test_wrong_boundary_rows_raise(self):
        with pytest.raises(DimensionError):
            PortHamiltonianSystem(
                P1=np.eye(2), P0=np.zeros((2, 2)),
                density=PiecewiseMatrixDensity.constant(np.eye(2)),
                W_B1=np.zeros((0, 4)), W_B2=np.zeros((1, 4)), W_C=np.zeros((1, 4)),
            )

    def test_negative_coefficient_rejected(self):
        with pytest.raises(NotAnEnergyDensityError):
            string_model(-1.0, 1.0)


class TestBoundaryForm:

    def test_string_form(self):
        Q = boundary_form([[0.0, 1.0], [1.0, 0.0]])
        expected = 0.25 * np.array([
            [0, 1, 0, 0],
            [1, 0, 0, 0],
            [0, 0, 0, -1],
            [0, 0, -1, 0],
        ])
        assert np.array_equal(Q, expected)

    def test_form_is_hermitian_and_traceless(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        Q = boundary_form(A)
        assert np.allclose(Q, Q.conj().T)
        assert np.trace(Q).real == pytest.approx(0.0, abs=1e-14)

    def test_dimension_check(self):
        with pytest.raises(DimensionError):
            boundary_form(np.eye(2), m=3)

    def test_trace_selector(self):
        v = np.arange(6.0)
        assert np.array_equal(trace_selector(3, 'b') @ v, [0.0, 1.0, 2.0])
        assert np.array_equal(trace_selector(3, 'a') @ v, [3.0, 4.0, 5.0])
        with pytest.raises(DomainError):
            trace_selector(3, 'c')

    def test_matches_polynomial_integral(self):
        """Re <x, Ax> equals v* Q v for polynomial states"""
        rng = np.random.default_rng(42)
        for trial in range(200):
            m = 2 + trial % 3
            P1 = rng.normal(size=(m, m))
            P1 = P1 + P1.T
            a = rng.uniform(-1.0, 0.0)
            b = a + rng.uniform(0.5, 2.0)
            # f_i(zeta) = sum_d c[i, d] zeta^d
            c = rng.normal(size=(m, 4))
            dc = np.array([npoly.polyder(row) for row in c])
            integrand = np.zeros(1)
            for i in range(m):
                for j in range(m):
                    integrand = npoly.polyadd(integrand, P1[i, j] * npoly.polymul(c[i], dc[j]))
            antiderivative = npoly.polyint(integrand)
            lhs = 0.5 * (npoly.polyval(b, antiderivative) - npoly.polyval(a, antiderivative))

            v = np.concatenate([npoly.polyval(b, c.T), npoly.polyval(a, c.T)])
            rhs = v @ boundary_form(P1) @ v
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


class TestClosure:

    def test_string_closed_loop_matrix(self, string_system):
        closed = close_loop(string_system, 2.0)
        expected = np.array([
            [0.0, 0.0, 1.0, 0.0],
            [2.0 * SQRT_HALF, SQRT_HALF, 0.0, 0.0],
        ])
        assert np.allclose(closed.W, expected)
        assert closed.mu == 2.0
        assert closed.rank == 2
        assert closed.full_rank

    @pytest.mark.parametrize("mu", [0.01, 0.1, 1.0, 10.0, 100.0])
    def test_full_rank_over_gain_grid(self, string_system, timoshenko_system, mu):
        assert close_loop(string_system, mu).full_rank
        assert close_loop(timoshenko_system, mu).rank == 4

    @pytest.mark.parametrize("mu", [0.0, -1.0])
    def test_nonpositive_gain_rejected(self, string_system, mu):
        with pytest.raises(DomainError):
            close_loop(string_system, mu)

    def test_default_gain_uses_hint(self):
        assert close_loop(string_model(mu_hint=3.0)).mu == 3.0
        assert close_loop(string_model()).mu == 1.0

    def test_from_matrix_shape_check(self, string_system):
        with pytest.raises(DimensionError):
            ClosedLoopSystem.from_matrix(string_system, np.eye(2))

    def test_clamped_loop(self):
        closed = clamped_string_loop()
        assert closed.mu is None
        assert closed.full_rank
        assert closed.interval == (0.0, 1.0)

    def test_numerical_rank(self):
        assert numerical_rank(np.zeros((2, 4))) == 0
        assert numerical_rank(np.array([[1.0, 0.0], [1.0, 1e-14]])) == 1
        assert numerical_rank(np.eye(3)) == 3


class TestTimoshenko:

    def test_dimensions(self, timoshenko_system):
        assert timoshenko_system.m == 4
        assert timoshenko_system.k == 2
        assert timoshenko_system.W_B1.shape == (2, 8)

    def test_boundary_rows(self, timoshenko_system):
        v = np.arange(1.0, 9.0)  # f(b) = 1..4, f(a) = 5..8
        # velocities vanish at a
        assert np.array_equal(timoshenko_system.W_B1 @ v, [6.0, 8.0])
        # force and moment at b are the inputs, velocities at b the outputs
        assert np.allclose(timoshenko_system.W_B2 @ v, SQRT_HALF * np.array([1.0, 3.0]))
        assert np.allclose(timoshenko_system.W_C @ v, SQRT_HALF * np.array([2.0, 4.0]))

    def test_coupling_is_skew(self, timoshenko_system):
        P0 = timoshenko_system.P0
        assert np.array_equal(P0, -P0.T)
        assert P0[0, 3] == -1.0

    def test_density_entries(self):
        sys = timoshenko_model(rho=2.0, EI=3.0, Ir=4.0, K=5.0)
        assert np.allclose(sys.density.evaluate(0.5), np.diag([5.0, 0.5, 3.0, 0.25]))

    def test_reproduces_beam_equations(self):
        # P1 (Hx)' + P0 Hx against rho w_tt = (K(w' - phi))' and Ir phi_tt = (EI phi')' + K(w' - phi)
        rho, Ir = 2.0, 0.5
        K = PiecewiseMatrixDensity.from_pieces([0.0, 1.0], [[1.0, 0.5]])
        EI = PiecewiseMatrixDensity.from_pieces([0.0, 1.0], [[2.0, 1.0]])
        sys = timoshenko_model(rho=rho, EI=EI, Ir=Ir, K=K)
        w = [0.0, 1.0, 0.5, -0.3, 0.2]
        phi = [0.3, -0.2, 0.4, 0.1]
        w_t = [1.0, -1.0, 0.5, 0.25]
        phi_t = [-0.5, 0.3, 0.2, -0.1]

        z = np.linspace(0.05, 0.95, 7)

        def val(c, order=0):
            return npoly.polyval(z, npoly.polyder(c, order) if order else c)

        shear = val(w, 1) - val(phi)
        shear_z = val(w, 2) - val(phi, 1)
        x = np.stack([shear, rho * val(w_t), val(phi, 1), Ir * val(phi_t)], axis=1)
        x_z = np.stack([shear_z, rho * val(w_t, 1), val(phi, 2), Ir * val(phi_t, 1)], axis=1)
        H = sys.density.evaluate_many(z)
        f = np.einsum('jil,jl->ji', H, x)
        f_z = np.einsum('jil,jl->ji', sys.density.derivative_many(z), x) + np.einsum('jil,jl->ji', H, x_z)
        rhs = f_z @ sys.P1.T + f @ sys.P0.T

        K_z, K_v = 0.5, 1.0 + 0.5 * z
        EI_z, EI_v = 1.0, 2.0 + z
        expected = np.stack([
            val(w_t, 1) - val(phi_t),
            K_z * shear + K_v * shear_z,
            val(phi_t, 1),
            EI_z * val(phi, 1) + EI_v * val(phi, 2) + K_v * shear,
        ], axis=1)
        assert np.abs(rhs - expected).max() <= 1e-12


class TestEnergy:

    def test_unit_state(self, string_system):
        f = np.zeros((101, 2))
        f[:, 0] = 1.0
        assert energy(string_system, f) == pytest.approx(0.5, rel=1e-14)

    def test_heavy_string(self):
        f = np.zeros((101, 2))
        f[:, 0] = 1.0
        assert energy(string_model(4.0, 1.0), f) == pytest.approx(2.0, rel=1e-14)

    def test_positive_for_nonzero_states(self, bv_string_system):
        rng = np.random.default_rng(5)
        for _ in range(20):
            f = rng.normal(size=(65, 2))
            assert energy(bv_string_system, f) > 0.0
        assert energy(bv_string_system, np.zeros((65, 2))) == 0.0

    def test_shape_checks(self, string_system):
        with pytest.raises(DimensionError):
            energy(string_system, np.zeros((10, 3)))

    def test_with_density_keeps_matrices(self, string_system, rho_step):
        heavy = with_density(string_system, string_model(rho_step).density)
        assert heavy.density is not string_system.density
        assert np.array_equal(heavy.P1, string_system.P1)
        assert heavy.name == string_system.name
