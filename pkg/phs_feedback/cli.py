#!/usr/bin/env python3
"""
Command-line entry point

    python -m phs_feedback check    [config] [--mu MU]
    python -m phs_feedback certify  [config] [--mu MU]
    python -m phs_feedback simulate [config] [--mu MU --nodes N --dt DT --tfinal T --dump-every S]
    python -m phs_feedback spectrum [config] [--mu MU --nodes N]
    python -m phs_feedback sweep    [config] [--mu-min A --mu-max B --steps K]
    python -m phs_feedback mollify  [config] [--eps EPS]

`config` is a TOML file or the name of a bundled template (string,
bv_string, timoshenko, custom). Exit codes: 0 success, 1 configuration
error, 2 hypothesis failure, 3 numerical failure.
"""

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from .bv_calculus import PiecewiseMatrixDensity, mollify
from .certificates import decay_certificate, sharpened_certificate
from .conditions import check_conditions
from .errors import ConfigError, HypothesisError, PHSError
from .experiment_config import (
    ExperimentConfig,
    GaussianBump,
    get_feedback_defaults,
    is_feature_enabled,
    load_config,
)
from .phs_model import close_loop, validate_system
from .report_generator import ResultWriter
from .simulator import (
    check_certificate,
    discretize,
    fit_decay_rate,
    gaussian_state,
    simulate,
    spectrum,
)

logger = logging.getLogger('phs_feedback')

TEMPLATE_DIR = Path(__file__).parent / 'templates'
COMMANDS = ('check', 'certify', 'simulate', 'spectrum', 'sweep', 'mollify')


def resolve_config_path(name: Optional[str]) -> Path:
    """A file path, or the name of a bundled template"""
    if name is None:
        return TEMPLATE_DIR / 'string.toml'
    path = Path(name)
    if not path.exists() and (TEMPLATE_DIR / f'{name}.toml').exists():
        return TEMPLATE_DIR / f'{name}.toml'
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='phs_feedback',
        description='Boundary-feedback stabilization of port-Hamiltonian systems with BV energy densities',
    )
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('config', nargs='?', default=None, help='TOML config file or bundled template name')
    parser.add_argument('--mu', type=float, default=None, help='Feedback gain in u = -mu y')
    parser.add_argument('--nodes', type=int, default=None, help='Number of spatial cells')
    parser.add_argument('--dt', type=float, default=None, help='Time step (default h/2)')
    parser.add_argument('--tfinal', type=float, default=None, help='Final simulation time')
    parser.add_argument('--eps', type=float, default=None, help='Mollification radius')
    parser.add_argument('--out', type=str, default=None, help='Output directory')
    parser.add_argument('--mu-min', type=float, default=None, help='Smallest gain in a sweep')
    parser.add_argument('--mu-max', type=float, default=None, help='Largest gain in a sweep')
    parser.add_argument('--steps', type=int, default=None, help='Number of log-spaced gains in a sweep')
    parser.add_argument('--dump-every', type=int, default=None, help='Write nodal states every S steps')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    return {
        'mu': args.mu,
        'numerics': {'nodes': args.nodes, 'dt': args.dt, 't_final': args.tfinal, 'mollify_eps': args.eps},
        'outputs': {'directory': args.out, 'dump_every': args.dump_every},
    }


def _status(ok: bool) -> str:
    return '✅' if ok else '❌'


def _emit(line: str):
    """Status lines go to stderr; stdout stays empty"""
    print(line, file=sys.stderr)


def _initial_state(config: ExperimentConfig, grid):
    bumps = config.initial_condition
    if not bumps:
        a, b = config.interval
        bumps = [GaussianBump(component=1, amplitude=1.0, center=0.5 * (a + b), width=0.08 * (b - a))]
    return gaussian_state(grid, bumps)


def run_check(config: ExperimentConfig, writer: ResultWriter) -> int:
    system = config.build_system()
    validation = validate_system(system)
    report = check_conditions(system, config.mu)

    _emit(f"{_status(validation.passed)} System '{system.name}' structure checks")
    _emit(f"{_status(report.impedance_passive)} Impedance passive (residual {report.passivity_residual:.3e}, "
          f"preserving={report.impedance_preserving})")
    _emit(f"{_status(report.lambda_ > 0)} Trace domination lambda = {report.lambda_:.12g} "
          f"at {report.dominating_endpoint}")
    _emit(f"{_status(report.closed_loop_dissipative)} Closed loop with mu = {report.mu:g}: "
          f"kappa_best = {report.kappa_best:.12g} at {report.kappa_endpoint}, rank W = {report.rank_W}")

    writer.write_json('conditions.json', {'validation': validation.to_dict(), 'conditions': report.to_dict()},
                      config.to_dict())
    if not report.hypotheses_hold:
        _emit("⚠️ Feedback hypotheses do not hold")
        return HypothesisError.exit_code
    return 0


def run_certify(config: ExperimentConfig, writer: ResultWriter) -> int:
    system = config.build_system()
    cert = decay_certificate(system, config.mu)
    document = {'certificate': cert.to_dict(), 'residuals': cert.verify()}
    if is_feature_enabled('emit_sharpened_certificate'):
        try:
            document['sharpened_certificate'] = sharpened_certificate(system, config.mu).to_dict()
        except HypothesisError as e:
            document['sharpened_certificate'] = {'error': str(e)}

    _emit(f"✅ Certificate for mu = {cert.mu:g}: M0 = {cert.M0:.12g}, omega0 = {cert.omega0:.12g}")
    _emit(f"   gamma0 = {cert.gamma0:.12g}, kappa0 = {cert.kappa0:.12g}, t0 = {cert.t0:.12g}, C0 = {cert.C0:.12g}")
    writer.write_json('certificate.json', document, config.to_dict())
    return 0


def _closed_loop(config: ExperimentConfig, system, mu: float):
    closed = close_loop(system, mu)
    eps = config.numerics.mollify_eps
    if eps is not None and isinstance(system.density, PiecewiseMatrixDensity) and system.density.jumps():
        logger.info("simulating the mollified system with eps=%g", eps)
        closed = closed.with_density(mollify(system.density, eps))
    return closed


def run_simulate(config: ExperimentConfig, writer: ResultWriter) -> int:
    system = config.build_system()
    numerics = config.numerics
    gen = discretize(_closed_loop(config, system, config.mu), numerics.nodes)
    dump_every = int(config.outputs.get('dump_every', 0))
    steps = int(math.ceil(numerics.t_final / numerics.dt - 1e-9))
    traj = simulate(gen, _initial_state(config, gen.grid), numerics.t_final, numerics.dt,
                    store_every=dump_every if dump_every > 0 else max(1, steps))

    writer.write_csv('trajectory.csv', traj.to_frame())
    if dump_every > 0:
        writer.write_csv('nodal.csv', traj.nodal_frame(dump_every))

    diagnostics = {
        'E0': traj.E0,
        'E_final': float(traj.energies[-1]),
        'max_energy_increase': traj.max_energy_increase(),
        'max_balance_residual': traj.max_balance_residual(),
        'feedback_residual': traj.feedback_residual(),
        'steps': steps,
        'dt': numerics.dt,
    }
    document = {'diagnostics': diagnostics}
    exit_code = 0
    try:
        cert = decay_certificate(system, config.mu)
        check = check_certificate(traj, cert)
        document['certificate'] = cert.to_dict()
        document['certificate_check'] = check.to_dict()
        writer.write_csv('envelope.csv', check.to_frame())
        _emit(f"{_status(check.passed)} Energy stays inside the certified envelope "
              f"(tightest margin {check.worst()[1]:.3e} at t = {check.worst()[0]:.6g})")
        if not check.passed:
            exit_code = 3
    except HypothesisError as e:
        document['certificate_check'] = {'error': str(e)}
        _emit(f"⚠️ No certificate: {e}")

    dissipative = diagnostics['max_energy_increase'] <= 1e-10
    _emit(f"{_status(dissipative)} Energy E(0) = {traj.E0:.6e} -> E({numerics.t_final:g}) = "
          f"{diagnostics['E_final']:.6e}, balance residual {diagnostics['max_balance_residual']:.2e}")
    writer.write_json('simulation.json', document, config.to_dict())
    return exit_code


def run_spectrum(config: ExperimentConfig, writer: ResultWriter) -> int:
    system = config.build_system()
    gen = discretize(close_loop(system, config.mu), config.numerics.nodes)
    result = spectrum(gen)
    dissipation = gen.dissipation_eigenvalues()
    writer.write_csv('spectrum.csv', result.to_frame())
    writer.write_json('spectrum.json', {
        'abscissa': result.abscissa,
        'count': int(result.eigenvalues.size),
        'max_dissipation_eigenvalue': float(dissipation[-1]),
    }, config.to_dict())
    _emit(f"✅ {result.eigenvalues.size} eigenvalues, spectral abscissa {result.abscissa:.12g}")
    return 0


def _sweep_point(config: ExperimentConfig, system, mu: float, window) -> dict:
    cert = decay_certificate(system, mu)
    numerics = config.numerics
    gen = discretize(close_loop(system, mu), numerics.nodes)
    t_final = max(numerics.t_final, window[1])
    steps = int(math.ceil(t_final / numerics.dt - 1e-9))
    traj = simulate(gen, _initial_state(config, gen.grid), t_final, numerics.dt, store_every=max(1, steps))
    try:
        abscissa = spectrum(gen).abscissa
    except PHSError as e:
        logger.warning("no spectrum at mu=%g: %s", mu, e)
        abscissa = math.nan
    return {
        'mu': mu,
        'lambda': cert.lam,
        'kappa': cert.kappa,
        'omega0': cert.omega0,
        'omega_hat': fit_decay_rate(traj, window),
        'abscissa': abscissa,
    }


def run_sweep(config: ExperimentConfig, writer: ResultWriter, mu_min: Optional[float], mu_max: Optional[float],
              steps: Optional[int]) -> int:
    defaults = get_feedback_defaults()
    mu_min = mu_min if mu_min is not None else defaults['sweep_mu_min']
    mu_max = mu_max if mu_max is not None else defaults['sweep_mu_max']
    steps = steps if steps is not None else defaults['sweep_steps']
    if not (0 < mu_min <= mu_max) or steps < 1:
        raise ConfigError(f"Invalid sweep range mu in [{mu_min}, {mu_max}] with {steps} steps")
    system = config.build_system()
    mus = np.geomspace(mu_min, mu_max, steps)
    window = defaults['sweep_fit_window']

    def point(mu):
        return _sweep_point(config, system, float(mu), window)

    if is_feature_enabled('enable_parallel_sweep') and steps > 1:
        with ThreadPoolExecutor() as pool:
            rows = list(pool.map(point, mus))
    else:
        rows = [point(mu) for mu in mus]

    table = pd.DataFrame(rows)
    writer.write_csv('sweep.csv', table)
    best = table.loc[table['omega0'].abs().idxmax()]
    _emit(f"✅ Swept {steps} gains; largest certified |omega0| = {abs(best['omega0']):.6g} at mu = {best['mu']:.6g}")
    writer.write_json('sweep.json', {'rows': rows, 'fit_window': list(window)}, config.to_dict())
    return 0


def run_mollify(config: ExperimentConfig, writer: ResultWriter) -> int:
    system = config.build_system()
    eps = config.numerics.mollify_eps
    if eps is None:
        raise ConfigError("mollify needs --eps or numerics.mollify_eps")
    density = system.density
    smooth = mollify(density, eps)

    m_lo, m_hi = density.bounds()
    s_lo, s_hi = smooth.bounds()
    slack = 1e-12 * m_hi  # eigenvalue rounding
    variation = density.total_variation()
    smooth_variation = smooth.total_variation()
    properties = {
        'eps': eps,
        'samples': int(smooth.grid.size),
        'bounds': [m_lo, m_hi],
        'smooth_bounds': [s_lo, s_hi],
        'bounds_preserved': bool(s_lo >= m_lo - slack and s_hi <= m_hi + slack),
        'total_variation': variation,
        'smooth_total_variation': smooth_variation,
        'mbar_prime': density.mbar_prime(),
        'variation_bounded': bool(smooth_variation <= variation + 1e-8),
        'hermitian_residual': smooth.hermitian_residual(),
        'derivative_residual': smooth.derivative_residual(),
    }
    writer.write_csv('mollified_density.csv', smooth.to_frame())
    writer.write_json('mollify.json', properties, config.to_dict())
    _emit(f"{_status(properties['bounds_preserved'])} Bounds [{s_lo:.6g}, {s_hi:.6g}] within [{m_lo:.6g}, {m_hi:.6g}]")
    _emit(f"{_status(properties['variation_bounded'])} Var(H_eps) = {smooth_variation:.6g} <= Var(H) = {variation:.6g}")
    return 0


def run(command: str, config: ExperimentConfig, args: argparse.Namespace) -> int:
    writer = ResultWriter(config.outputs['directory'], config.outputs.get('float_format', '%.17g'))
    if command == 'check':
        return run_check(config, writer)
    if command == 'certify':
        return run_certify(config, writer)
    if command == 'simulate':
        return run_simulate(config, writer)
    if command == 'spectrum':
        return run_spectrum(config, writer)
    if command == 'sweep':
        return run_sweep(config, writer, args.mu_min, args.mu_max, args.steps)
    return run_mollify(config, writer)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        config = load_config(resolve_config_path(args.config), overrides_from_args(args))
        return run(args.command, config, args)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        for error in e.errors[1:]:
            print(f"   {error}", file=sys.stderr)
        return e.exit_code
    except PHSError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
