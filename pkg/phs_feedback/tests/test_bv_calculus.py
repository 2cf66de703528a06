#!/usr/bin/env python3
"""
Test piecewise densities, their variation and bounds, and mollification
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phs_feedback.bv_calculus import (
    PiecewiseMatrixDensity,
    bump_normalization,
    mollify,
)
from phs_feedback.errors import DomainError, NotAnEnergyDensityError
from phs_feedback.phs_model import string_model


def linear_scalar():
    """H(zeta) = 1 + zeta on [0, 1]"""
    return PiecewiseMatrixDensity.from_pieces([0.0, 1.0], [[1.0, 1.0]])


def step_scalar():
    return PiecewiseMatrixDensity.scalar_steps([1.0, 2.0], [0.0, 0.5, 1.0])


def quadratic_diag():
    """diag(1, 1 + zeta^2) on [0, 1]"""
    coef = np.zeros((3, 2, 2))
    coef[0] = np.eye(2)
    coef[2, 1, 1] = 1.0
    return PiecewiseMatrixDensity.from_pieces([0.0, 1.0], [coef])


def test_evaluate_constant_identity():
    H = PiecewiseMatrixDensity.constant(np.eye(2))
    for zeta in (0.0, 0.3, 1.0):
        for side in ('left', 'right'):
            assert np.array_equal(H.evaluate(zeta, side), np.eye(2))


def test_evaluate_one_sided_limits_at_jump():
    H = step_scalar()
    assert H.evaluate(0.5, 'left')[0, 0] == 1.0
    assert H.evaluate(0.5, 'right')[0, 0] == 2.0
    assert H.evaluate(0.5)[0, 0] == 2.0  # right-continuous representative


def test_evaluate_polynomial_piece():
    assert linear_scalar().evaluate(0.25, 'right')[0, 0] == pytest.approx(1.25, abs=1e-15)


def test_evaluate_outside_interval():
    with pytest.raises(DomainError):
        step_scalar().evaluate(1.5)
    with pytest.raises(DomainError):
        step_scalar().evaluate(-0.1)


def test_rejects_non_hermitian_piece():
    with pytest.raises(DomainError):
        PiecewiseMatrixDensity.constant([[1.0, 2.0], [0.0, 1.0]])


def test_rejects_unordered_breakpoints():
    with pytest.raises(DomainError):
        PiecewiseMatrixDensity.scalar_steps([1.0, 2.0], [0.0, 0.7, 0.5])


def test_total_variation_examples():
    assert PiecewiseMatrixDensity.constant(np.eye(2)).total_variation() == 0.0
    assert step_scalar().total_variation() == pytest.approx(1.0, abs=1e-15)

    coef = np.array([[[1.0, 0.0], [0.0, 2.0]], [[0.0, 0.0], [0.0, -1.0]]])
    H = PiecewiseMatrixDensity.from_pieces([0.0, 1.0], [coef])
    assert H.total_variation() == pytest.approx(1.0, rel=1e-10)


def test_total_variation_dominates_partition_sums():
    coef = np.array([[[1.0, 0.0], [0.0, 2.0]], [[0.0, 0.0], [0.0, -1.0]]])
    H = PiecewiseMatrixDensity.from_pieces([0.0, 1.0], [coef])
    rng = np.random.default_rng(7)
    for _ in range(200):
        points = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 20)]))
        values = H.evaluate_many(points)
        partition_sum = np.sum(np.linalg.norm(np.diff(values, axis=0), ord=2, axis=(1, 2)))
        assert partition_sum <= H.total_variation() + 1e-12


def test_total_variation_of_monotone_scalar():
    H = PiecewiseMatrixDensity.from_pieces([0.0, 0.4, 1.0], [[1.0, 2.0], [2.0, 0.0, 1.0]])
    a, b = H.interval
    expected = abs(H.evaluate(b, 'left')[0, 0] - H.evaluate(a, 'right')[0, 0])
    assert H.total_variation() == pytest.approx(expected, rel=1e-10)


def test_bounds_examples(rho_step):
    assert PiecewiseMatrixDensity.constant(np.eye(2)).bounds() == (1.0, 1.0)
    assert string_model(rho_step, 1.0).density.bounds() == pytest.approx((0.25, 1.0), abs=1e-15)
    assert quadratic_diag().bounds() == pytest.approx((1.0, 2.0), abs=1e-12)


def test_bounds_find_interior_minimum():
    # 1 + (zeta - 0.37)^2 has its minimum between Gauss points
    c = 0.37
    H = PiecewiseMatrixDensity.from_pieces([0.0, 1.0], [[1.0 + c * c, -2.0 * c, 1.0]])
    m_lo, m_hi = H.bounds()
    assert m_lo == pytest.approx(1.0, abs=1e-12)
    assert m_hi == pytest.approx(1.0 + 0.63 ** 2, abs=1e-12)


def test_bounds_rejects_indefinite_density():
    with pytest.raises(NotAnEnergyDensityError):
        PiecewiseMatrixDensity.constant([[-1.0]]).bounds()


def test_mbar_prime_examples(rho_step):
    assert PiecewiseMatrixDensity.constant(np.eye(2)).mbar_prime() == pytest.approx(2.0)
    assert string_model(rho_step, 1.0).density.mbar_prime() == pytest.approx(2.75, abs=1e-14)
    assert linear_scalar().mbar_prime() == pytest.approx(4.0, rel=1e-10)


def test_cell_average_examples():
    assert np.allclose(PiecewiseMatrixDensity.constant(np.eye(2)).cell_average(0.2, 0.7), np.eye(2))
    assert step_scalar().cell_average(0.4, 0.6)[0, 0] == pytest.approx(1.5, abs=1e-14)
    ramp = PiecewiseMatrixDensity.from_pieces([0.0, 1.0], [[0.0, 1.0]])
    assert ramp.cell_average(0.0, 1.0)[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_cell_average_degenerate_cell():
    with pytest.raises(DomainError):
        step_scalar().cell_average(0.5, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_cell_average_splits(lo, t, s):
    H = PiecewiseMatrixDensity.from_pieces([0.0, 0.3, 0.6, 1.0], [[1.0, 2.0], [3.0], [1.0, 0.0, 4.0]])
    hi = lo + s * (1.0 - lo)
    mid = lo + t * (hi - lo)
    whole = H.cell_average(lo, hi)
    split = ((mid - lo) * H.cell_average(lo, mid) + (hi - mid) * H.cell_average(mid, hi)) / (hi - lo)
    assert np.abs(whole - split).max() <= 1e-12


def test_diagonal_merges_breakpoints():
    first = PiecewiseMatrixDensity.scalar_steps([1.0, 2.0], [0.0, 0.5, 1.0])
    second = PiecewiseMatrixDensity.from_pieces([0.0, 0.3, 1.0], [[1.0, 1.0], [5.0]])
    H = PiecewiseMatrixDensity.diagonal(first, second)
    assert np.allclose(H.breakpoints, [0.0, 0.3, 0.5, 1.0])
    for zeta in (0.1, 0.35, 0.7):
        expected = np.diag([first.evaluate(zeta)[0, 0], second.evaluate(zeta)[0, 0]])
        assert np.allclose(H.evaluate(zeta), expected, atol=1e-14)


def test_reciprocal_of_polynomial():
    H = linear_scalar()
    inverse = H.reciprocal()
    zeta = np.linspace(0.0, 1.0, 101)
    assert np.allclose(inverse.evaluate_many(zeta)[:, 0, 0], 1.0 / (1.0 + zeta), rtol=1e-10, atol=0)


def test_bump_normalization_constant():
    assert bump_normalization() == pytest.approx(2.25228, abs=1e-5)


def test_mollify_constant_is_unchanged():
    H = PiecewiseMatrixDensity.constant([[2.0, 0.5], [0.5, 1.0]])
    smooth = mollify(H, 0.1)
    assert np.allclose(smooth.values, H.evaluate(0.0), atol=1e-13)
    assert np.allclose(smooth.derivatives, 0.0, atol=1e-10)


def test_mollify_step_midpoint_and_far_field():
    smooth = mollify(step_scalar(), 0.1)
    assert smooth.evaluate(0.5)[0, 0] == pytest.approx(1.5, abs=1e-12)

    far = np.abs(smooth.grid - 0.5) >= 0.1
    expected = np.where(smooth.grid[far] < 0.5, 1.0, 2.0)
    assert np.allclose(smooth.values[far, 0, 0], expected, atol=1e-13)


def test_mollify_derivatives_match_values():
    smooth = mollify(step_scalar(), 0.1)
    # Simpson integral of the derivative samples against value increments
    assert smooth.derivative_residual() <= 1e-6
    assert smooth.hermitian_residual() == 0.0


@pytest.mark.parametrize("eps", [0.1, 0.05, 0.025])
def test_mollified_step_keeps_its_variation(eps):
    # the kernel stays inside [0, 1], so the integral of |H'| is the jump
    assert mollify(step_scalar(), eps).total_variation() == pytest.approx(1.0, abs=1e-9)


def test_smooth_variation_integrates_the_derivative():
    # |zeta - 1/2| + 1 sampled too coarsely to see the turning point
    H = PiecewiseMatrixDensity.from_pieces([0.0, 0.5, 1.0], [[1.5, -1.0], [1.0, 1.0]])
    smooth = mollify(H, 0.05, samples=6)
    partition_sum = np.abs(np.diff(smooth.values[:, 0, 0])).sum()
    assert smooth.total_variation() >= partition_sum + 0.05
    assert smooth.total_variation() <= H.total_variation()


def test_mollify_warns_for_wide_kernel():
    with pytest.warns(RuntimeWarning):
        mollify(step_scalar(), 0.6)


def test_mollify_rejects_nonpositive_radius():
    with pytest.raises(DomainError):
        mollify(step_scalar(), 0.0)


def random_step_density(rng):
    """Piecewise-constant 2x2 SPD density with 1 to 3 jumps at least 0.2 apart"""
    jumps = int(rng.integers(1, 4))
    cell = 1.0 / jumps
    inner = [(i + rng.uniform(0.3, 0.7)) * cell for i in range(jumps)]
    pieces = []
    for _ in range(jumps + 1):
        A = rng.normal(size=(2, 2))
        pieces.append(A @ A.T + 0.5 * np.eye(2))
    return PiecewiseMatrixDensity.from_pieces([0.0, *inner, 1.0], pieces)


def test_mollification_properties_on_random_densities():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        H = random_step_density(rng)
        m_lo, m_hi = H.bounds()
        for eps in (0.1, 0.05, 0.025):
            smooth = mollify(H, eps)
            eig = np.linalg.eigvalsh(smooth.values)
            scale = 1e-12 * m_hi
            assert eig.min() >= m_lo - scale
            assert eig.max() <= m_hi + scale
            assert smooth.total_variation() <= H.total_variation() + 1e-8
            assert smooth.total_variation() <= H.mbar_prime()


def test_mollification_converges_at_continuity_points():
    rng = np.random.default_rng(11)
    for _ in range(20):
        H = random_step_density(rng)
        targets = H.breakpoints[1:-1] + 0.03
        previous = None
        for eps in (0.1, 0.05, 0.025, 0.0125):
            smooth = mollify(H, eps, samples=2049)
            idx = np.searchsorted(smooth.grid, targets)
            exact = H.evaluate_many(smooth.grid[idx])
            errors = np.linalg.norm(smooth.values[idx] - exact, ord=2, axis=(1, 2))
            if previous is not None:
                assert np.all(errors <= previous + 1e-12)
            previous = errors
        assert np.all(previous <= 1e-12)
