#!/usr/bin/env python3
"""
Energy-dissipative simulation of closed-loop port-Hamiltonian systems

The nodal unknown is f = Hx, which stays continuous across jumps of H. Space
is discretized with a summation-by-parts difference operator, the boundary
condition W (f_n; f_0) = 0 is imposed by an M-orthogonal projection, and time
is advanced with the implicit midpoint rule. Together these reproduce the
continuous energy balance dE/dt = 2 v* Q v exactly at the discrete level.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import splu
from tqdm import tqdm

from .bv_calculus import EnergyDensity, PiecewiseMatrixDensity
from .certificates import DecayCertificate, energy_envelope
from .errors import DimensionError, DomainError, NumericalError, RankDeficientError, WindowError
from .experiment_config import GaussianBump, get_numerics_defaults, get_tolerance, is_feature_enabled
from .phs_model import ClosedLoopSystem, boundary_form, hermitian_part

logger = logging.getLogger(__name__)


def sbp_first_derivative(n: int, h: float) -> Tuple[sp.csr_matrix, np.ndarray]:
    """(D, sigma) with sigma-weighted <f, Dg> + <Df, g> = f_n g_n - f_0 g_0

    Central differences in the interior, one-sided first order at both ends.
    """
    main = np.zeros(n + 1)
    upper = np.full(n, 0.5)
    lower = np.full(n, -0.5)
    main[0], main[-1] = -0.5, 0.5
    Q = sp.diags([lower, main, upper], [-1, 0, 1], format='csr')
    sigma = np.full(n + 1, h)
    sigma[0] = sigma[-1] = 0.5 * h
    D = sp.diags(1.0 / sigma) @ Q
    return D.tocsr(), sigma


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Uniform nodes with trapezoid weights and cell-averaged densities"""

    interval: Tuple[float, float]
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    node_matrices: np.ndarray

    @classmethod
    def build(cls, density: EnergyDensity, n: int) -> 'SpatialGrid':
        if n < get_numerics_defaults()['min_nodes']:
            raise DomainError(f"Grid needs at least {get_numerics_defaults()['min_nodes']} cells, got {n}")
        a, b = density.interval
        h = (b - a) / n
        nodes = a + h * np.arange(n + 1)
        nodes[-1] = b
        weights = np.full(n + 1, h)
        weights[0] = weights[-1] = 0.5 * h
        node_matrices = np.stack([
            density.cell_average(max(a, z - 0.5 * h), min(b, z + 0.5 * h)) for z in nodes
        ])
        node_matrices = 0.5 * (node_matrices + np.conj(np.swapaxes(node_matrices, 1, 2)))
        return cls(interval=(a, b), n=n, nodes=nodes, weights=weights, node_matrices=node_matrices)

    @property
    def h(self) -> float:
        a, b = self.interval
        return (b - a) / self.n

    @property
    def m(self) -> int:
        return self.node_matrices.shape[1]

    @cached_property
    def node_inverses(self) -> np.ndarray:
        return np.linalg.inv(self.node_matrices)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        """M = blockdiag(sigma_j H_j^{-1})"""
        return sp.block_diag([s * Hi for s, Hi in zip(self.weights, self.node_inverses)], format='csr')

    @cached_property
    def mass_inverse(self) -> sp.csr_matrix:
        return sp.block_diag([H / s for s, H in zip(self.weights, self.node_matrices)], format='csr')

    def energy_density(self, f: np.ndarray) -> np.ndarray:
        """f_j* H_j^{-1} f_j at every node; f may carry leading time axes"""
        return np.real(np.einsum('...ji,jil,...jl->...j', np.conj(f), self.node_inverses, f))

    def energy(self, f: np.ndarray) -> float:
        """1/2 sum_j sigma_j f_j* H_j^{-1} f_j"""
        f = np.asarray(f).reshape(self.n + 1, self.m)
        return 0.5 * float(np.dot(self.weights, self.energy_density(f)))


@dataclass(eq=False)
class DiscreteGenerator:
    """A_h = P L on nodal states flattened node-major, f[j * m + i] = f_i(zeta_j)"""

    closed: ClosedLoopSystem
    grid: SpatialGrid
    L: sp.csr_matrix
    A: sp.csr_matrix
    projector: sp.csr_matrix
    trace_map: sp.csr_matrix
    constraint: sp.csr_matrix
    Q: np.ndarray

    @property
    def dimension(self) -> int:
        return self.L.shape[0]

    @property
    def mass(self) -> sp.csr_matrix:
        return self.grid.mass

    def flatten(self, f) -> np.ndarray:
        f = np.asarray(f)
        if f.size != self.dimension:
            raise DimensionError(f"State has {f.size} entries, generator dimension is {self.dimension}")
        return f.reshape(-1)

    def unflatten(self, f: np.ndarray) -> np.ndarray:
        return f.reshape(self.grid.n + 1, self.grid.m)

    def apply(self, f) -> np.ndarray:
        return self.unflatten(self.A @ self.flatten(f))

    def project(self, f) -> np.ndarray:
        return self.unflatten(self.projector @ self.flatten(f))

    def trace(self, f) -> np.ndarray:
        """(f_n; f_0)"""
        return self.trace_map @ self.flatten(f)

    def energy(self, f) -> float:
        return self.grid.energy(self.flatten(f))

    def projector_residuals(self) -> dict:
        P, M = self.projector, self.mass
        return {
            'idempotence': float(abs(P @ P - P).max()),
            'self_adjoint': float(abs(M @ P - P.conj().T @ M).max()),
            'constraint': float(abs(self.constraint @ P).max()),
        }

    @cached_property
    def range_basis(self) -> np.ndarray:
        """M-orthonormal basis Z of range(P) = ker(W T)"""
        Z0 = scipy.linalg.null_space(self.constraint.toarray())
        gram = Z0.conj().T @ (self.mass @ Z0)
        chol = scipy.linalg.cholesky(hermitian_part(gram), lower=True)
        return scipy.linalg.solve_triangular(chol, Z0.conj().T, lower=True).conj().T

    def restricted(self) -> np.ndarray:
        """Matrix of A_h on range(P) in the M-orthonormal basis"""
        Z = self.range_basis
        return Z.conj().T @ (self.mass @ (self.A @ Z))

    def dissipation_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the M-Hermitian part of A_h on range(P), ascending"""
        return np.linalg.eigvalsh(hermitian_part(self.restricted()))


def _boundary_trace_map(n: int, m: int) -> sp.csr_matrix:
    N = (n + 1) * m
    rows = np.arange(2 * m)
    cols = np.concatenate([n * m + np.arange(m), np.arange(m)])
    return sp.csr_matrix((np.ones(2 * m), (rows, cols)), shape=(2 * m, N))


def discretize(clsys: ClosedLoopSystem, n: int) -> DiscreteGenerator:
    """Projected summation-by-parts generator of the closed loop on n cells"""
    if not clsys.full_rank:
        raise RankDeficientError(f"Boundary matrix has rank {clsys.rank} < {clsys.m}", [])
    base = clsys.base
    grid = SpatialGrid.build(base.density, n)
    m = base.m

    D, _ = sbp_first_derivative(n, grid.h)
    H_blocks = sp.block_diag(list(grid.node_matrices), format='csr')
    L = (H_blocks @ (sp.kron(D, base.P1) + sp.kron(sp.identity(n + 1), base.P0))).tocsr()

    trace_map = _boundary_trace_map(n, m)
    C = sp.csr_matrix(clsys.W) @ trace_map
    MinvCt = grid.mass_inverse @ C.conj().T
    S = (C @ MinvCt).toarray()
    K = sp.csr_matrix(MinvCt.toarray() @ np.linalg.inv(S))
    projector = (sp.identity(L.shape[0], dtype=K.dtype, format='csr') - K @ C).tocsr()
    projector.eliminate_zeros()
    A = (projector @ L).tocsr()

    gen = DiscreteGenerator(closed=clsys, grid=grid, L=L, A=A, projector=projector,
                            trace_map=trace_map, constraint=C.tocsr(), Q=boundary_form(base.P1))
    residuals = gen.projector_residuals()
    if max(residuals.values()) > get_tolerance('projector_residual'):
        logger.warning("projector residuals above tolerance: %s", residuals)
    logger.debug("discretized %s on %d cells (dimension %d)", base.name, n, gen.dimension)
    return gen


@dataclass
class Trajectory:
    """Time series of one simulation; states are kept every `store_every` steps"""

    times: np.ndarray
    energies: np.ndarray
    traces: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    balance_residuals: np.ndarray
    states: np.ndarray
    state_times: np.ndarray
    dt: float
    mu: Optional[float]
    grid: SpatialGrid
    store_every: int = 1

    @property
    def E0(self) -> float:
        return float(self.energies[0])

    def feedback_residual(self) -> float:
        """max_k |u_k + mu y_k|"""
        if self.mu is None:
            return math.nan
        return float(np.max(np.abs(self.inputs + self.mu * self.outputs), initial=0.0))

    def max_energy_increase(self) -> float:
        """Largest E_{k+1} - E_k, relative to E_0"""
        if self.E0 == 0:
            return 0.0
        return float(np.max(np.diff(self.energies), initial=-math.inf) / self.E0)

    def max_balance_residual(self) -> float:
        """Largest |E_{k+1} - E_k - 2 dt v_mid* Q v_mid|, relative to E_0"""
        if self.E0 == 0:
            return float(np.max(np.abs(self.balance_residuals), initial=0.0))
        return float(np.max(np.abs(self.balance_residuals), initial=0.0) / self.E0)

    def to_frame(self) -> pd.DataFrame:
        data = {'t': self.times, 'E': self.energies}
        for i in range(self.inputs.shape[1]):
            data[f'u{i + 1}'] = np.real(self.inputs[:, i])
        for i in range(self.outputs.shape[1]):
            data[f'y{i + 1}'] = np.real(self.outputs[:, i])
        return pd.DataFrame(data)

    def nodal_frame(self, every: int) -> pd.DataFrame:
        """Long table t, zeta, f1..fm for every `every`-th stored state"""
        if every <= 0:
            raise DomainError("Nodal dump interval must be positive")
        step = max(1, every // self.store_every)
        frames = []
        for t, f in zip(self.state_times[::step], self.states[::step]):
            frame = pd.DataFrame(np.real(f), columns=[f'f{i + 1}' for i in range(f.shape[1])])
            frame.insert(0, 'zeta', self.grid.nodes)
            frame.insert(0, 't', t)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)


def simulate(gen: DiscreteGenerator, f0, t_final: float, dt: float, store_every: int = 1,
             progress: Optional[bool] = None) -> Trajectory:
    """Implicit midpoint: (I - dt/2 A) f^{k+1} = (I + dt/2 A) f^k"""
    if not dt > 0:
        raise DomainError(f"Time step must be positive, got {dt}")
    if not t_final > 0:
        raise DomainError(f"Final time must be positive, got {t_final}")
    if progress is None:
        progress = is_feature_enabled('enable_progress_bar')

    base = gen.closed.base
    f = gen.projector @ gen.flatten(f0)
    steps = int(math.ceil(t_final / dt - 1e-9))
    N = gen.dimension

    identity = sp.identity(N, dtype=gen.A.dtype, format='csc')
    half = 0.5 * dt * gen.A
    try:
        lu = splu((identity - half).tocsc())
    except RuntimeError as e:
        raise NumericalError(f"Implicit midpoint matrix is singular for dt={dt}: {e}") from e
    explicit = (identity + half).tocsr()

    times = dt * np.arange(steps + 1)
    energies = np.empty(steps + 1)
    traces = np.empty((steps + 1, 2 * base.m), dtype=f.dtype)
    balance = np.empty(steps)
    stored = [gen.unflatten(f).copy()]
    stored_times = [0.0]

    energies[0] = gen.energy(f)
    traces[0] = gen.trace(f)
    for k in tqdm(range(steps), disable=not progress, desc='simulate'):
        f_new = lu.solve(explicit @ f)
        if not np.all(np.isfinite(f_new)):
            raise NumericalError(f"Non-finite state at step {k + 1} (t={times[k + 1]:.6g}), "
                                 f"last energy {energies[k]:.6e}")
        v_mid = gen.trace(0.5 * (f + f_new))
        f = f_new
        energies[k + 1] = gen.energy(f)
        traces[k + 1] = gen.trace(f)
        flux = float(np.real(np.vdot(v_mid, gen.Q @ v_mid)))
        balance[k] = energies[k + 1] - energies[k] - 2.0 * dt * flux
        if (k + 1) % store_every == 0:
            stored.append(gen.unflatten(f).copy())
            stored_times.append(times[k + 1])

    traj = Trajectory(
        times=times, energies=energies, traces=traces,
        inputs=traces @ base.W_B2.T, outputs=traces @ base.W_C.T,
        balance_residuals=balance, states=np.array(stored), state_times=np.array(stored_times),
        dt=dt, mu=gen.closed.mu, grid=gen.grid, store_every=store_every,
    )
    logger.info("simulated %d steps of dt=%g: E0=%.6e E_end=%.6e", steps, dt, traj.E0, energies[-1])
    return traj


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    abscissa: float
    roughness: Optional[np.ndarray] = None

    def nearest(self, target: complex, max_roughness: Optional[float] = None) -> complex:
        """Eigenvalue closest to target, optionally among modes smoother than max_roughness"""
        candidates = np.arange(self.eigenvalues.size)
        if max_roughness is not None:
            if self.roughness is None:
                raise DomainError("Roughness filter needs a spectrum computed with eigenvectors")
            candidates = candidates[self.roughness <= max_roughness]
        best = candidates[np.argmin(np.abs(self.eigenvalues[candidates] - target))]
        return complex(self.eigenvalues[best])

    def to_frame(self) -> pd.DataFrame:
        data = {'Re': self.eigenvalues.real, 'Im': self.eigenvalues.imag}
        if self.roughness is not None:
            data['roughness'] = self.roughness
        return pd.DataFrame(data)


def _roughness(gen: DiscreteGenerator, vectors: np.ndarray) -> np.ndarray:
    """||f_{j+1} - f_j|| / (2 ||f||) per mode: near 0 for resolved modes, near 1 for grid-scale ones"""
    nodal = (gen.range_basis @ vectors).T.reshape(vectors.shape[1], gen.grid.n + 1, gen.grid.m)
    jumps = np.linalg.norm(np.diff(nodal, axis=1).reshape(vectors.shape[1], -1), axis=1)
    sizes = np.linalg.norm(nodal.reshape(vectors.shape[1], -1), axis=1)
    return jumps / (2.0 * sizes)


def spectrum(gen: DiscreteGenerator, with_roughness: bool = False) -> SpectrumResult:
    """Eigenvalues of A_h on range(P), sorted by real part then imaginary part"""
    cap = get_tolerance('spectrum_dimension_cap')
    if gen.dimension > cap:
        raise NumericalError(f"Dense spectrum limited to dimension {cap}, generator has {gen.dimension}")
    roughness = None
    if with_roughness:
        eig, vectors = scipy.linalg.eig(gen.restricted())
        roughness = _roughness(gen, vectors)
    else:
        eig = scipy.linalg.eigvals(gen.restricted())
    order = np.lexsort((eig.imag, eig.real))
    return SpectrumResult(eigenvalues=eig[order], abscissa=float(eig.real.max()),
                          roughness=None if roughness is None else roughness[order])


def _window(grid: SpatialGrid, gamma0: float, tau: float, sign: str) -> Tuple[np.ndarray, np.ndarray]:
    a, b = grid.interval
    if sign == '+':
        offset = gamma0 * (b - grid.nodes)
    elif sign == '-':
        offset = gamma0 * (grid.nodes - a)
    else:
        raise DomainError(f"sign must be '+' or '-', got {sign!r}")
    return offset, tau - offset


def _check_window(traj: Trajectory, gamma0: float, tau: float):
    a, b = traj.grid.interval
    if not tau > 2 * gamma0 * (b - a):
        raise WindowError(f"tau={tau} must exceed 2 gamma0 (b - a) = {2 * gamma0 * (b - a)}")
    if traj.state_times[-1] < tau - 1e-9 * max(1.0, tau):
        raise WindowError(f"Trajectory ends at {traj.state_times[-1]}, window needs {tau}")
    spacing = traj.dt * traj.store_every
    shortest = tau - 2 * gamma0 * (b - a)
    needed = get_tolerance('min_window_samples')
    if shortest / spacing < needed:
        raise WindowError(f"Shortest window {shortest:.3g} holds fewer than {needed} samples of spacing {spacing:.3g}")


def _integral_to(times: np.ndarray, values: np.ndarray, cumulative: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Trapezoid integral of each column from times[0] to s[j], linear between samples"""
    spacing = times[1] - times[0]
    k = np.clip(np.floor((s - times[0]) / spacing).astype(int), 0, times.size - 2)
    cols = np.arange(values.shape[1])
    theta = np.clip((s - times[k]) / spacing, 0.0, 1.0)
    g_k = values[k, cols]
    g_s = g_k + theta * (values[k + 1, cols] - g_k)
    return cumulative[k, cols] + (s - times[k]) * 0.5 * (g_k + g_s)


def _interpolate_states(traj: Trajectory, s: np.ndarray) -> np.ndarray:
    """f(s_j) at node j, linear in time; shape (n+1, m)"""
    times = traj.state_times
    spacing = times[1] - times[0]
    k = np.clip(np.floor((s - times[0]) / spacing).astype(int), 0, times.size - 2)
    theta = np.clip((s - times[k]) / spacing, 0.0, 1.0)[:, None]
    nodes = np.arange(traj.grid.n + 1)
    return (1.0 - theta) * traj.states[k, nodes] + theta * traj.states[k + 1, nodes]


def sideways_energy(traj: Trajectory, gamma0: float, tau: float, sign: str = '+') -> np.ndarray:
    """F(zeta_j) = integral of x* H x at zeta_j over the characteristic window"""
    _check_window(traj, gamma0, tau)
    start, stop = _window(traj.grid, gamma0, tau, sign)
    density = traj.grid.energy_density(traj.states)
    cumulative = cumulative_trapezoid(density, traj.state_times, axis=0, initial=0.0)
    return (_integral_to(traj.state_times, density, cumulative, stop)
            - _integral_to(traj.state_times, density, cumulative, start))


def sideways_derivative_formula(traj: Trajectory, gamma0: float, tau: float, P1: np.ndarray,
                                P0: np.ndarray, density: EnergyDensity, sign: str = '+') -> np.ndarray:
    """dF/dzeta from window-end values and the P0, H' volume term

    dF = x*(t'H + P1^-1)x at t - x*(r'H + P1^-1)x at r
         - integral of x*((P1^-1 P0 H)* + H' + P1^-1 P0 H)x over [r, t]
    """
    _check_window(traj, gamma0, tau)
    grid = traj.grid
    start, stop = _window(grid, gamma0, tau, sign)
    slope = gamma0 if sign == '+' else -gamma0
    P1_inv = np.linalg.inv(np.asarray(P1))

    H = grid.node_matrices
    x_states = np.einsum('jil,kjl->kji', grid.node_inverses, traj.states)

    def quadratic(x, weight):
        return np.real(np.einsum('...ji,jil,...jl->...j', np.conj(x), weight, x))

    x_stop = np.einsum('jil,jl->ji', grid.node_inverses, _interpolate_states(traj, stop))
    x_start = np.einsum('jil,jl->ji', grid.node_inverses, _interpolate_states(traj, start))
    ends = (quadratic(x_stop, slope * H + P1_inv)
            - quadratic(x_start, -slope * H + P1_inv))

    coupling = P1_inv @ np.asarray(P0) @ H
    volume_weight = coupling + np.conj(np.swapaxes(coupling, 1, 2)) + density.derivative_many(grid.nodes)
    integrand = quadratic(x_states, volume_weight)
    cumulative = cumulative_trapezoid(integrand, traj.state_times, axis=0, initial=0.0)
    volume = (_integral_to(traj.state_times, integrand, cumulative, stop)
              - _integral_to(traj.state_times, integrand, cumulative, start))
    return ends - volume


def _pointwise_rate(density: EnergyDensity, nodes: np.ndarray, norm_P1_inv_P0: float) -> Optional[np.ndarray]:
    """kappa_hat(eta) for densities with a pointwise derivative, None for densities with jumps"""
    if isinstance(density, PiecewiseMatrixDensity) and density.jumps():
        return None
    m_lo, m_hi = density.bounds()
    derivative_norms = np.linalg.norm(density.derivative_many(nodes), ord=2, axis=(1, 2))
    return (2.0 * norm_P1_inv_P0 * m_hi + derivative_norms) / m_lo


def sideways_monotone_profile(traj: Trajectory, gamma0: float, tau: float, P1: np.ndarray, P0: np.ndarray,
                              density: EnergyDensity, sign: str = '+',
                              kappa0: Optional[float] = None) -> np.ndarray:
    """F+ exp(-int_zeta^b rate) (nondecreasing) or F- exp(-int_a^zeta rate) (nonincreasing)

    The rate is kappa_hat for densities without jumps and the constant kappa0
    otherwise.
    """
    grid = traj.grid
    values = sideways_energy(traj, gamma0, tau, sign)
    norm_coupling = float(np.linalg.norm(np.linalg.inv(np.asarray(P1)) @ np.asarray(P0), 2))
    rate = _pointwise_rate(density, grid.nodes, norm_coupling)
    if rate is None:
        if kappa0 is None:
            raise DomainError("Densities with jumps need the constant rate kappa0")
        rate = np.full(grid.n + 1, kappa0)
    from_a = cumulative_trapezoid(rate, grid.nodes, initial=0.0)
    if sign == '+':
        return values * np.exp(-(from_a[-1] - from_a))
    return values * np.exp(-from_a)


@dataclass
class SidewaysReport:
    zeta: np.ndarray
    F_plus: np.ndarray
    F_minus: np.ndarray
    bound_plus: float
    bound_minus: float
    slack: float = 0.05

    @property
    def passed(self) -> bool:
        return bool(np.all(self.F_plus <= self.bound_plus * (1 + self.slack))
                    and np.all(self.F_minus <= self.bound_minus * (1 + self.slack)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'zeta': self.zeta,
            'F_plus': self.F_plus,
            'F_minus': self.F_minus,
            'bound_plus': np.full(self.zeta.size, self.bound_plus),
            'bound_minus': np.full(self.zeta.size, self.bound_minus),
        })


def sideways_report(traj: Trajectory, cert: DecayCertificate, tau: float, slack: float = 0.05) -> SidewaysReport:
    """Endpoint estimates F+(zeta) <= F+(b) e^{kappa0 (b-a)} and F-(zeta) <= F-(a) e^{kappa0 (b-a)}"""
    F_plus = sideways_energy(traj, cert.gamma0, tau, '+')
    F_minus = sideways_energy(traj, cert.gamma0, tau, '-')
    growth = math.exp(cert.kappa0 * cert.length)
    return SidewaysReport(zeta=traj.grid.nodes, F_plus=F_plus, F_minus=F_minus,
                          bound_plus=float(F_plus[-1] * growth), bound_minus=float(F_minus[0] * growth),
                          slack=slack)


def fit_decay_rate(traj, window: Tuple[float, float]) -> float:
    """Least-squares slope of log(E)/2 against t on the window; -inf after extinction"""
    t_lo, t_hi = window
    mask = (traj.times >= t_lo) & (traj.times <= t_hi)
    needed = get_tolerance('min_fit_samples')
    if mask.sum() < needed:
        raise WindowError(f"Fit window [{t_lo}, {t_hi}] holds {int(mask.sum())} < {needed} samples")
    energies = np.asarray(traj.energies)[mask]
    if np.any(energies <= 0):
        return -math.inf
    slope, _ = np.polyfit(np.asarray(traj.times)[mask], 0.5 * np.log(energies), 1)
    return float(slope)


@dataclass
class CertificateCheck:
    times: np.ndarray
    energies: np.ndarray
    envelope: np.ndarray
    slack: float
    violations: List[float] = field(default_factory=list)

    @property
    def margin(self) -> np.ndarray:
        return self.envelope * (1.0 + self.slack) - self.energies

    @property
    def passed(self) -> bool:
        return not self.violations

    def worst(self) -> Tuple[float, float]:
        """(time, margin) of the tightest point"""
        i = int(np.argmin(self.margin))
        return float(self.times[i]), float(self.margin[i])

    def to_dict(self) -> dict:
        t, margin = self.worst()
        ratio = np.divide(self.energies, self.envelope, out=np.zeros_like(self.energies),
                          where=self.envelope > 0)
        return {
            'passed': self.passed,
            'slack': self.slack,
            'violations': len(self.violations),
            'first_violation_time': self.violations[0] if self.violations else None,
            'tightest_time': t,
            'tightest_margin': margin,
            'max_energy_to_envelope': float(ratio.max(initial=0.0)),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.times, 'E': self.energies, 'envelope': self.envelope,
                             'margin': self.margin})


def check_certificate(traj: Trajectory, cert: DecayCertificate) -> CertificateCheck:
    """E_k <= M0^2 e^{2 omega0 t_k} E_0 (1 + slack) at every step"""
    slack = get_tolerance('envelope_slack')
    envelope = energy_envelope(cert, max(traj.E0, 0.0), traj.times)
    check = CertificateCheck(times=traj.times, energies=traj.energies, envelope=envelope, slack=slack)
    check.violations = [float(t) for t in traj.times[check.margin < 0]]
    if check.violations:
        logger.error("energy exceeds the certified envelope at %d times, first at t=%.6g",
                     len(check.violations), check.violations[0])
    return check


def trajectory_distance(first: Trajectory, second: Trajectory) -> float:
    """max over stored times of ||f_1 - f_2||_M, with M from the first trajectory's grid"""
    if first.states.shape != second.states.shape:
        raise DimensionError(f"Trajectories differ in shape: {first.states.shape} vs {second.states.shape}")
    diff = first.states - second.states
    norms = np.einsum('kj,j->k', first.grid.energy_density(diff), first.grid.weights)
    return float(np.sqrt(norms.max(initial=0.0)))


def gaussian_state(grid: SpatialGrid, bumps: Sequence[GaussianBump]) -> np.ndarray:
    """Sum of amplitude exp(-(zeta - center)^2 / (2 width^2)) in the given f-components"""
    f = np.zeros((grid.n + 1, grid.m))
    for bump in bumps:
        if not 1 <= bump.component <= grid.m:
            raise DimensionError(f"Component {bump.component} out of range 1..{grid.m}")
        if bump.width <= 0:
            raise DomainError("Gaussian width must be positive")
        f[:, bump.component - 1] += bump.amplitude * np.exp(-0.5 * ((grid.nodes - bump.center) / bump.width) ** 2)
    return f
