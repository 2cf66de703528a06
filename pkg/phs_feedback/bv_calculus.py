#!/usr/bin/env python3
"""
Matrix-valued energy densities of bounded variation

A density is stored piecewise: strictly increasing breakpoints
a = z_0 < z_1 < ... < z_K = b and, on every subinterval, a matrix polynomial
given by its coefficients in powers of the local coordinate (zeta - z_k).
The stored representative is right-continuous at interior breakpoints; both
one-sided limits are available through ``side``.

``mollify`` turns such a density into a ``SmoothDensity`` (dense samples of
values and first derivatives joined by cubic Hermite interpolation) by
convolution with the standard bump kernel, using the clamped extension of the
density beyond [a, b].
"""

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Literal, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np
import pandas as pd
from numpy.polynomial import Chebyshev, Polynomial
from numpy.polynomial import polynomial as npoly
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .errors import DimensionError, DomainError, NotAnEnergyDensityError
from .experiment_config import get_numerics_defaults, get_tolerance

logger = logging.getLogger(__name__)

Side = Literal['left', 'right']


@runtime_checkable
class EnergyDensity(Protocol):
    """What the model and the simulator need from a density"""

    @property
    def interval(self) -> Tuple[float, float]: ...

    @property
    def dim(self) -> int: ...

    def evaluate(self, zeta: float, side: Side = 'right') -> np.ndarray: ...

    def evaluate_many(self, zeta, side: Side = 'right') -> np.ndarray: ...

    def derivative_many(self, zeta, side: Side = 'right') -> np.ndarray: ...

    def cell_average(self, zeta_lo: float, zeta_hi: float) -> np.ndarray: ...

    def bounds(self) -> Tuple[float, float]: ...

    def total_variation(self) -> float: ...

    def mbar_prime(self) -> float: ...


def _as_coefficients(piece) -> np.ndarray:
    """Normalize a piece to a (degree+1, m, m) coefficient array"""
    c = np.asarray(piece)
    if not np.iscomplexobj(c):
        c = c.astype(float)
    if c.ndim == 0:
        return c.reshape(1, 1, 1)
    if c.ndim == 1:
        # scalar polynomial
        return c.reshape(-1, 1, 1)
    if c.ndim == 2:
        # constant matrix
        return c[np.newaxis]
    if c.ndim == 3:
        return c
    raise DimensionError(f"Cannot interpret a piece of shape {c.shape}")


def _polyval_matrix(s: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Evaluate a matrix polynomial at local coordinates s, shape (q, m, m)"""
    return np.moveaxis(npoly.polyval(np.asarray(s, dtype=float), coef), -1, 0)


def _shift_coefficients(coef: np.ndarray, delta: float) -> np.ndarray:
    """Coefficients of s -> p(s + delta), same degree"""
    out = np.zeros_like(coef)
    for c in coef[::-1]:
        shifted = np.zeros_like(out)
        shifted[1:] = out[:-1]
        out = shifted + delta * out
        out[0] = out[0] + c
    return out


def _hermitian_part(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values + np.conj(np.swapaxes(values, -1, -2)))


@dataclass(frozen=True, eq=False)
class PiecewiseMatrixDensity:
    """Piecewise-polynomial Hermitian matrix function on [a, b]"""

    breakpoints: np.ndarray
    pieces: Tuple[np.ndarray, ...]

    def __post_init__(self):
        bps = np.asarray(self.breakpoints, dtype=float)
        if bps.ndim != 1 or bps.size < 2:
            raise DomainError("A density needs at least the two interval endpoints as breakpoints")
        if np.any(np.diff(bps) <= 0):
            raise DomainError("Breakpoints must be strictly increasing")
        pieces = tuple(_as_coefficients(p) for p in self.pieces)
        if len(pieces) != bps.size - 1:
            raise DimensionError(f"Expected {bps.size - 1} pieces, got {len(pieces)}")
        m = pieces[0].shape[1]
        max_degree = get_numerics_defaults()['max_piece_degree']
        for k, c in enumerate(pieces):
            if c.shape[1:] != (m, m):
                raise DimensionError(f"Piece {k} has matrix shape {c.shape[1:]}, expected {(m, m)}")
            if c.shape[0] - 1 > max_degree:
                raise DomainError(f"Piece {k} has degree {c.shape[0] - 1} > {max_degree}")
        object.__setattr__(self, 'breakpoints', bps)
        object.__setattr__(self, 'pieces', pieces)

        residual = self.hermitian_residual()
        if residual > get_tolerance('hermitian_residual'):
            raise DomainError(f"Density is not Hermitian (residual {residual:.3e})")

    # --- construction helpers ---

    @classmethod
    def constant(cls, matrix, interval=(0.0, 1.0)) -> 'PiecewiseMatrixDensity':
        return cls(np.asarray(interval, dtype=float), (np.atleast_2d(np.asarray(matrix)),))

    @classmethod
    def scalar_steps(cls, values: Sequence[float], breakpoints: Sequence[float]) -> 'PiecewiseMatrixDensity':
        """Piecewise-constant scalar density, values[k] on [z_k, z_{k+1})"""
        return cls(np.asarray(breakpoints, dtype=float), tuple(np.array([[v]]) for v in values))

    @classmethod
    def from_pieces(cls, breakpoints, pieces) -> 'PiecewiseMatrixDensity':
        return cls(np.asarray(breakpoints, dtype=float), tuple(pieces))

    @classmethod
    def diagonal(cls, *scalars: 'PiecewiseMatrixDensity') -> 'PiecewiseMatrixDensity':
        """Diagonal density diag(s_1, ..., s_m) from scalar densities"""
        if not scalars:
            raise DomainError("diagonal() needs at least one scalar density")
        interval = scalars[0].interval
        for s in scalars:
            if s.dim != 1:
                raise DimensionError("diagonal() takes scalar densities")
            if not np.allclose(s.interval, interval, rtol=0, atol=1e-14):
                raise DomainError("All diagonal entries must live on the same interval")
        bps = np.unique(np.concatenate([s.breakpoints for s in scalars]))
        m = len(scalars)
        degree = max(c.shape[0] for s in scalars for c in s.pieces)
        pieces = []
        for lo, hi in zip(bps[:-1], bps[1:]):
            mid = 0.5 * (lo + hi)
            coef = np.zeros((degree, m, m))
            for i, s in enumerate(scalars):
                k = int(s._locate(np.array([mid]), 'right')[0])
                local = _shift_coefficients(s.pieces[k][:, 0, 0], lo - s.breakpoints[k])
                coef[:local.size, i, i] = local
            pieces.append(coef)
        return cls(bps, tuple(pieces))

    def reciprocal(self) -> 'PiecewiseMatrixDensity':
        """Pointwise inverse of the density

        Exact for constant pieces; polynomial scalar pieces are replaced by
        degree-8 Chebyshev interpolants of 1/p, subdividing a piece until the
        relative error is below the 'reciprocal_relative' tolerance.
        """
        self.bounds()
        tol = get_tolerance('reciprocal_relative')
        max_depth = get_numerics_defaults()['reciprocal_max_depth']
        degree = get_numerics_defaults()['max_piece_degree']
        bps, pieces = [self.breakpoints[0]], []

        for k, coef in enumerate(self.pieces):
            lo, hi = self.breakpoints[k], self.breakpoints[k + 1]
            if coef.shape[0] == 1:
                pieces.append(np.linalg.inv(coef[0])[np.newaxis])
                bps.append(hi)
                continue
            if self.dim != 1:
                raise DomainError("reciprocal() of non-constant matrix pieces is not supported")
            poly = Polynomial(coef[:, 0, 0])
            stack = [(lo, hi, 0)]
            done = []
            while stack:
                l, h, depth = stack.pop()
                f = lambda z, l=l: 1.0 / poly(z - lo)
                cheb = Chebyshev.interpolate(lambda s: f(s + l), degree, domain=[0.0, h - l])
                check = np.linspace(0.0, h - l, 257)
                exact = f(check + l)
                err = np.max(np.abs(cheb(check) - exact) / np.abs(exact))
                if err <= tol or depth >= max_depth:
                    if err > tol:
                        logger.warning("reciprocal piece on [%g, %g] has relative error %.2e", l, h, err)
                    local = cheb.convert(kind=Polynomial, domain=[0.0, h - l], window=[0.0, h - l]).coef
                    done.append((l, h, local))
                else:
                    mid = 0.5 * (l + h)
                    stack.append((mid, h, depth + 1))
                    stack.append((l, mid, depth + 1))
            for l, h, local in sorted(done, key=lambda item: item[0]):
                pieces.append(local.reshape(-1, 1, 1))
                bps.append(h)

        return PiecewiseMatrixDensity(np.asarray(bps), tuple(pieces))

    # --- basic properties ---

    @property
    def interval(self) -> Tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def dim(self) -> int:
        return self.pieces[0].shape[1]

    @property
    def n_pieces(self) -> int:
        return len(self.pieces)

    @property
    def dtype(self):
        return np.result_type(*self.pieces)

    def is_piecewise_constant(self) -> bool:
        return all(c.shape[0] == 1 for c in self.pieces)

    def _locate(self, zeta: np.ndarray, side: Side) -> np.ndarray:
        a, b = self.interval
        if np.any(zeta < a) or np.any(zeta > b):
            raise DomainError(f"zeta outside [{a}, {b}]")
        if side not in ('left', 'right'):
            raise DomainError(f"side must be 'left' or 'right', got {side!r}")
        idx = np.searchsorted(self.breakpoints, zeta, side=side) - 1
        # a has only a right limit, b only a left limit
        return np.clip(idx, 0, self.n_pieces - 1)

    # --- evaluation ---

    def evaluate_many(self, zeta, side: Side = 'right') -> np.ndarray:
        z = np.atleast_1d(np.asarray(zeta, dtype=float))
        idx = self._locate(z, side)
        out = np.empty((z.size, self.dim, self.dim), dtype=self.dtype)
        for k in np.unique(idx):
            mask = idx == k
            out[mask] = _polyval_matrix(z[mask] - self.breakpoints[k], self.pieces[k])
        return out

    def evaluate(self, zeta: float, side: Side = 'right') -> np.ndarray:
        """One-sided limit of the stored representative at zeta"""
        return self.evaluate_many(np.array([zeta]), side)[0]

    def derivative_many(self, zeta, side: Side = 'right') -> np.ndarray:
        z = np.atleast_1d(np.asarray(zeta, dtype=float))
        idx = self._locate(z, side)
        out = np.zeros((z.size, self.dim, self.dim), dtype=self.dtype)
        for k in np.unique(idx):
            coef = self.pieces[k]
            if coef.shape[0] == 1:
                continue
            mask = idx == k
            out[mask] = _polyval_matrix(z[mask] - self.breakpoints[k], npoly.polyder(coef, axis=0))
        return out

    def jumps(self) -> list:
        """H(z_k+) - H(z_k-) at every interior breakpoint"""
        return [self.evaluate(z, 'right') - self.evaluate(z, 'left') for z in self.breakpoints[1:-1]]

    def _gauss_grid(self, k: int, points: int) -> np.ndarray:
        """Gauss points of piece k plus its endpoints, in local coordinates"""
        length = self.breakpoints[k + 1] - self.breakpoints[k]
        x, _ = np.polynomial.legendre.leggauss(points)
        return np.concatenate([[0.0], 0.5 * length * (x + 1.0), [length]])

    def hermitian_residual(self) -> float:
        points = get_numerics_defaults()['gauss_points_per_piece']
        worst = 0.0
        for k, coef in enumerate(self.pieces):
            values = _polyval_matrix(self._gauss_grid(k, points), coef)
            worst = max(worst, float(np.max(np.abs(values - np.conj(np.swapaxes(values, 1, 2))))))
        return worst

    # --- variation and bounds ---

    @cached_property
    def _variation(self) -> float:
        epsrel = get_tolerance('variation_epsrel')
        total = 0.0
        for k, coef in enumerate(self.pieces):
            if coef.shape[0] == 1:
                continue
            dcoef = npoly.polyder(coef, axis=0)
            length = self.breakpoints[k + 1] - self.breakpoints[k]

            def speed(s, dcoef=dcoef):
                return np.linalg.norm(_polyval_matrix(np.array([s]), dcoef)[0], 2)

            value, _ = integrate.quad(speed, 0.0, length, epsrel=epsrel, epsabs=1e-15, limit=200)
            total += value
        total += sum(np.linalg.norm(j, 2) for j in self.jumps())
        return float(total)

    def total_variation(self) -> float:
        """Var(H): integrated ||H'|| over the pieces plus the jump norms (operator 2-norm)"""
        return self._variation

    @cached_property
    def _bounds(self) -> Tuple[float, float]:
        points = get_numerics_defaults()['gauss_points_per_piece']
        lows, highs = [], []
        for k, coef in enumerate(self.pieces):
            s = self._gauss_grid(k, points)
            eig = np.linalg.eigvalsh(_hermitian_part(_polyval_matrix(s, coef)))
            lows.append(eig[:, 0].min())
            highs.append(eig[:, -1].max())
            if coef.shape[0] == 1:
                continue

            def lam_min(x, coef=coef):
                return np.linalg.eigvalsh(_hermitian_part(_polyval_matrix(np.array([x]), coef)))[0, 0]

            def neg_lam_max(x, coef=coef):
                return -np.linalg.eigvalsh(_hermitian_part(_polyval_matrix(np.array([x]), coef)))[0, -1]

            # refine every interior local extremum of the sampled eigenvalue curves
            for curve, fun, sink in ((eig[:, 0], lam_min, lows), (-eig[:, -1], neg_lam_max, None)):
                for i in range(1, s.size - 1):
                    lower_than_neighbours = curve[i] <= curve[i - 1] and curve[i] <= curve[i + 1]
                    if lower_than_neighbours and (curve[i] < curve[i - 1] or curve[i] < curve[i + 1]):
                        res = optimize.minimize_scalar(fun, bounds=(s[i - 1], s[i + 1]), method='bounded',
                                                       options={'xatol': 1e-12})
                        if sink is not None:
                            lows.append(min(res.fun, curve[i]))
                        else:
                            highs.append(max(-res.fun, -curve[i]))
        return float(min(lows)), float(max(highs))

    def bounds(self) -> Tuple[float, float]:
        """(m_lo, m_hi): extreme eigenvalues of H over [a, b]"""
        m_lo, m_hi = self._bounds
        if m_lo <= 0:
            raise NotAnEnergyDensityError(f"Not an energy density: lower eigenvalue bound {m_lo:.6g} <= 0")
        return m_lo, m_hi

    def mbar_prime(self) -> float:
        """||H(a)|| + Var(H) + ||H(b)||"""
        a, b = self.interval
        return (np.linalg.norm(self.evaluate(a, 'right'), 2) + self.total_variation()
                + np.linalg.norm(self.evaluate(b, 'left'), 2))

    def cell_average(self, zeta_lo: float, zeta_hi: float) -> np.ndarray:
        """Mean of H over [zeta_lo, zeta_hi], integrated exactly piece by piece"""
        a, b = self.interval
        if not (a <= zeta_lo < zeta_hi <= b):
            raise DomainError(f"Degenerate or out-of-range cell [{zeta_lo}, {zeta_hi}] in [{a}, {b}]")
        total = np.zeros((self.dim, self.dim), dtype=self.dtype)
        for k, coef in enumerate(self.pieces):
            lo = max(zeta_lo, self.breakpoints[k])
            hi = min(zeta_hi, self.breakpoints[k + 1])
            if hi <= lo:
                continue
            icoef = npoly.polyint(coef, axis=0)
            ends = _polyval_matrix(np.array([lo, hi]) - self.breakpoints[k], icoef)
            total += ends[1] - ends[0]
        return total / (zeta_hi - zeta_lo)


@dataclass(frozen=True, eq=False)
class SmoothDensity:
    """C^1 density from dense samples of values and derivatives"""

    grid: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    eps: float
    source: Optional[PiecewiseMatrixDensity] = None

    @property
    def interval(self) -> Tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @cached_property
    def spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.grid, self.values, self.derivatives, axis=0)

    def _check(self, z: np.ndarray) -> np.ndarray:
        a, b = self.interval
        if np.any(z < a) or np.any(z > b):
            raise DomainError(f"zeta outside [{a}, {b}]")
        return z

    def evaluate_many(self, zeta, side: Side = 'right') -> np.ndarray:
        z = self._check(np.atleast_1d(np.asarray(zeta, dtype=float)))
        return self.spline(z)

    def evaluate(self, zeta: float, side: Side = 'right') -> np.ndarray:
        return self.evaluate_many(np.array([zeta]), side)[0]

    def derivative_many(self, zeta, side: Side = 'right') -> np.ndarray:
        z = self._check(np.atleast_1d(np.asarray(zeta, dtype=float)))
        return self.spline(z, 1)

    def cell_average(self, zeta_lo: float, zeta_hi: float) -> np.ndarray:
        a, b = self.interval
        if not (a <= zeta_lo < zeta_hi <= b):
            raise DomainError(f"Degenerate or out-of-range cell [{zeta_lo}, {zeta_hi}] in [{a}, {b}]")
        return self.spline.integrate(zeta_lo, zeta_hi) / (zeta_hi - zeta_lo)

    def total_variation(self) -> float:
        """Integral of ||H'(zeta)|| by the trapezoidal rule on the derivative samples"""
        norms = np.linalg.norm(self.derivatives, ord=2, axis=(1, 2))
        return float(integrate.trapezoid(norms, self.grid))

    def bounds(self) -> Tuple[float, float]:
        eig = np.linalg.eigvalsh(self.values)
        m_lo, m_hi = float(eig[:, 0].min()), float(eig[:, -1].max())
        if m_lo <= 0:
            raise NotAnEnergyDensityError(f"Not an energy density: lower eigenvalue bound {m_lo:.6g} <= 0")
        return m_lo, m_hi

    def mbar_prime(self) -> float:
        return (np.linalg.norm(self.values[0], 2) + self.total_variation()
                + np.linalg.norm(self.values[-1], 2))

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.values - np.conj(np.swapaxes(self.values, 1, 2)))))

    def derivative_residual(self) -> float:
        """Largest mismatch between value increments and Simpson integrals of the derivatives"""
        spacing = self.grid[1] - self.grid[0]
        v, d = self.values, self.derivatives
        increments = v[2:] - v[:-2]
        simpson = spacing / 3.0 * (d[:-2] + 4.0 * d[1:-1] + d[2:])
        return float(np.max(np.abs(increments - simpson)))

    def to_frame(self):
        """Samples as a table: zeta, H entries, H' entries (row-major)"""
        m = self.dim
        data = {'zeta': self.grid}
        for i in range(m):
            for j in range(m):
                data[f'H_{i + 1}{j + 1}'] = np.real(self.values[:, i, j])
        for i in range(m):
            for j in range(m):
                data[f'dH_{i + 1}{j + 1}'] = np.real(self.derivatives[:, i, j])
        return pd.DataFrame(data)


def bump(r) -> np.ndarray:
    """Unnormalized kernel r -> exp(-1/(1 - r^2)) on (-1, 1), zero elsewhere"""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def bump_prime(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    ri = r[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ri ** 2)) * (-2.0 * ri / (1.0 - ri ** 2) ** 2)
    return out


@lru_cache(maxsize=None)
def bump_normalization() -> float:
    """Constant c with c * integral of bump over (-1, 1) equal to 1 (c ~ 2.25228)"""
    mass, _ = integrate.quad(lambda r: math.exp(-1.0 / (1.0 - r * r)) if abs(r) < 1.0 else 0.0,
                             -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 / mass


def _convolve(density: PiecewiseMatrixDensity, grid: np.ndarray, eps: float, nodes: int, chunk: int):
    """Values and derivatives of the mollified clamped extension at grid"""
    a, b = density.interval
    x, w = np.polynomial.legendre.leggauss(nodes)
    # kinks of the clamped extension: interior breakpoints and both endpoints
    cuts = np.asarray(density.breakpoints)
    m = density.dim
    values = np.empty((grid.size, m, m), dtype=density.dtype)
    derivatives = np.empty_like(values)

    for start in range(0, grid.size, chunk):
        z = grid[start:start + chunk]
        r_cuts = np.clip((z[:, None] - cuts[None, :]) / eps, -1.0, 1.0)
        ends = np.ones((z.size, 1))
        r_pts = np.sort(np.concatenate([-ends, r_cuts, ends], axis=1), axis=1)
        lo, hi = r_pts[:, :-1], r_pts[:, 1:]
        half = 0.5 * (hi - lo)
        r = (0.5 * (hi + lo))[..., None] + half[..., None] * x
        wr = half[..., None] * w
        weights = wr * bump(r)
        dweights = wr * bump_prime(r)

        s = np.clip(z[:, None, None] - eps * r, a, b)
        H = density.evaluate_many(s.ravel(), 'right').reshape(s.shape + (m, m))
        mass = weights.sum(axis=(1, 2))
        mean = np.einsum('spq,spqij->sij', weights, H) / mass[:, None, None]
        slope = np.einsum('spq,spqij->sij', dweights, H - mean[:, None, None]) / (eps * mass[:, None, None])
        values[start:start + z.size] = mean
        derivatives[start:start + z.size] = slope

    return values, derivatives


def mollify(density: PiecewiseMatrixDensity, eps: float, samples: Optional[int] = None) -> SmoothDensity:
    """Convolve the clamped extension of a density with the bump kernel of radius eps"""
    if eps <= 0:
        raise DomainError(f"Mollification radius must be positive, got {eps}")
    a, b = density.interval
    if eps >= 0.5 * (b - a):
        message = f"Mollification radius {eps} is at least half the interval length {b - a}"
        logger.warning(message)
        warnings.warn(message, RuntimeWarning, stacklevel=2)

    defaults = get_numerics_defaults()
    if samples is None:
        samples = max(defaults['mollifier_min_samples'],
                      int(math.ceil(defaults['mollifier_samples_per_eps'] * (b - a) / eps)) + 1)
    grid = np.linspace(a, b, samples)
    values, derivatives = _convolve(density, grid, eps, defaults['mollifier_quadrature_nodes'],
                                    defaults['mollifier_chunk'])
    logger.debug("mollified density with eps=%g on %d samples", eps, samples)
    return SmoothDensity(grid=grid, values=_hermitian_part(values), derivatives=_hermitian_part(derivatives),
                         eps=float(eps), source=density)
