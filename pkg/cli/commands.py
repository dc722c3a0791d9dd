# cli/commands.py
"""
Command-line front end for g2kinetics

Every command returns a process exit code: 0 success, 2 configuration or
validation error, 3 numerical failure, 4 file error.
"""

import argparse
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from cli.pipeline import (
    analyze_histogram, expected_singles, power_label, provenance, resolve_eta, run_pipeline,
    write_curve_output, write_output, CurveAnalysis,
)
from cli.run_config import RunConfig, load_run_config
from config.presets import list_presets
from data.event_files import EventWriter, iter_event_file, read_events
from data.result_files import (
    file_kind, read_curve, read_histogram, read_json, read_saturation, write_histogram, write_json,
)
from estimation.background import background_correct
from estimation.calibration import calibrate_eta, rate_uncertainties
from estimation.comparison import compare_models
from estimation.g2_fit import fit_g2, require_converged
from estimation.models import FitResult, PowerPoint
from estimation.power_fit import extract_power_model
from estimation.saturation import fit_saturation
from kinetics.inversion import rates_from_derived, rates_from_observables
from kinetics.models import DerivedParams, DetectionEfficiency, PowerModel
from kinetics.power import saturation_curve, two_level_reference_curve
from photon_sim.correlator import correlate_blocks, correlate_sliced
from photon_sim.models import CORRELATION_MODES, G2Curve
from photon_sim.normalization import normalize
from photon_sim.simulator import iter_event_blocks, signal_fraction
from utils.config import Config, get_validation_details
from utils.errors import AmbiguousSolutionError, ConfigValidationError, G2KineticsError
from utils.logging_config import KineticsLogger, get_logger

logger = get_logger('commands')


# ============================================================================
# ARGUMENTS
# ============================================================================

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='run configuration YAML')
    parser.add_argument('--seed', type=int, help='random seed (unsigned 64-bit)')
    parser.add_argument('--out', dest='output_dir', help='output directory')
    parser.add_argument('--format', choices=('csv', 'json'), help='table output format')
    parser.add_argument('--set', dest='set_expressions', action='append', default=[], metavar='KEY=VALUE',
                        help='override a config value, e.g. --set simulation.duration_s=10')


def _add_correlation(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--bin-width', type=float, help='bin width in ns')
    parser.add_argument('--tau-min', type=float, help='lower edge of the delay window in ns')
    parser.add_argument('--tau-max', type=float, help='upper edge of the delay window in ns')
    parser.add_argument('--mode', choices=CORRELATION_MODES, help='histogram mode')
    parser.add_argument('--slices', type=int, help='time slices correlated concurrently')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='g2kinetics',
        description='Three-level photon statistics: simulate, correlate, fit and invert g2(tau)')
    subparsers = parser.add_subparsers(dest='command', required=True)

    simulate = subparsers.add_parser('simulate', help='simulate detection events for each ladder power')
    _add_common(simulate)

    correlate = subparsers.add_parser('correlate', help='histogram event files into raw and normalized g2')
    _add_common(correlate)
    _add_correlation(correlate)
    correlate.add_argument('inputs', nargs='+', help='event files (.csv or .bin)')

    analyze = subparsers.add_parser('analyze', help='correlate, correct, fit and invert')
    _add_common(analyze)
    _add_correlation(analyze)
    analyze.add_argument('inputs', nargs='+', help='event, histogram or curve files')
    analyze.add_argument('--rho', type=float, help='signal fraction S/(S+B) for background correction')
    analyze.add_argument('--power', type=float, help='pump power in mW recorded with the fit')
    analyze.add_argument('--eta', type=float, help='known detection efficiency for the rate inversion')
    analyze.add_argument('--k21-hint', type=float, help='k21 (1/ns) selecting between inversion branches')
    analyze.add_argument('--brightness', type=float, help='emitter count rate (counts/s) for curve inputs')

    invert = subparsers.add_parser('invert', help='rate constants from fit observables')
    _add_common(invert)
    invert.add_argument('--fit', dest='fit_file', help='g2_fit.json written by analyze')
    invert.add_argument('--g-e', type=float)
    invert.add_argument('--k-tm', type=float, help='1/ns')
    invert.add_argument('--k-1m', type=float, help='1/ns')
    invert.add_argument('--sigma2-inf', type=float, help='stationary excited population')
    invert.add_argument('--brightness', type=float, help='counts/s')
    invert.add_argument('--eta', type=float)
    invert.add_argument('--k21-hint', type=float, help='1/ns')

    calibrate = subparsers.add_parser('calibrate-eta', help='eta making k21 power independent')
    _add_common(calibrate)
    calibrate.add_argument('inputs', nargs='+', help='g2_fit.json files, one per power')

    power_fit = subparsers.add_parser('power-fit', help='linear pump-power model of the rates')
    _add_common(power_fit)
    power_fit.add_argument('inputs', nargs='+', help='g2_fit.json files, one per power')
    power_fit.add_argument('--calibration', help='eta_calibration.json from calibrate-eta')
    power_fit.add_argument('--eta', type=float, help='known detection efficiency')

    saturation = subparsers.add_parser('saturation', help='fit the saturation curve N(P)')
    _add_common(saturation)
    saturation.add_argument('input', help='CSV with power_mW,counts_per_s[,counts_std_per_s]')
    saturation.add_argument('--power-model', help='power_model.json from power-fit (default: config)')
    saturation.add_argument('--calibration', help='eta_calibration.json from calibrate-eta')
    saturation.add_argument('--eta', type=float, help='known detection efficiency')

    pipeline = subparsers.add_parser('pipeline', help='simulate and analyze the whole power ladder')
    _add_common(pipeline)

    return parser


def _load(args: argparse.Namespace, require_seed: bool = False) -> RunConfig:
    overrides = {'seed': args.seed, 'output_dir': args.output_dir, 'format': args.format}
    correlation = {
        'bin_width_ns': getattr(args, 'bin_width', None),
        'tau_min_ns': getattr(args, 'tau_min', None),
        'tau_max_ns': getattr(args, 'tau_max', None),
        'mode': getattr(args, 'mode', None),
        'n_slices': getattr(args, 'slices', None),
    }
    correlation = {key: value for key, value in correlation.items() if value is not None}
    if correlation:
        overrides['correlation'] = correlation
    return load_run_config(args.config, overrides, args.set_expressions, require_seed=require_seed)


def _output_path(config: RunConfig, name: str, stem: Optional[str] = None) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    return os.path.join(config.output_dir, f"{stem}_{name}" if stem else name)


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _calibration_field(path: str, key: str) -> Any:
    value = read_json(path).get(key)
    if value is None:
        raise ConfigValidationError(f"{path} has no '{key}' entry", field='calibration')
    return value


def _eta(config: RunConfig, explicit: Optional[float] = None,
         calibration_file: Optional[str] = None, required: bool = True) -> Optional[DetectionEfficiency]:
    """Detection efficiency from a flag, a calibration file or analysis.eta"""
    if explicit is not None:
        return DetectionEfficiency(explicit)
    if calibration_file:
        return DetectionEfficiency(_calibration_field(calibration_file, 'eta'))
    if config.analysis['eta'] is not None:
        return DetectionEfficiency(config.analysis['eta'])
    if required:
        raise ConfigValidationError("no detection efficiency: pass --eta, --calibration or set analysis.eta",
                                    field='analysis.eta')
    return None


def _read_points(paths: Sequence[str]) -> List[PowerPoint]:
    points = []
    for path in paths:
        try:
            points.append(PowerPoint.from_dict(read_json(path)))
        except G2KineticsError as e:
            raise ConfigValidationError(f"{path}: {e}", field='inputs') from e
    return points


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_simulate(args: argparse.Namespace) -> int:
    """One event file per ladder power (or one for the fixed rates) plus a JSON summary"""
    config = _load(args, require_seed=True)
    ladder = config.power_ladder if config.power_model() is not None else []
    powers: List[Optional[float]] = list(ladder) or [None]
    seeds = config.power_seeds(len(powers))
    extension = 'bin' if config.simulation['event_format'] == 'binary' else 'csv'

    runs = []
    for power, seed in zip(powers, seeds):
        start_time = time.time()
        sim_config = config.sim_config(config.rates_at(power), seed)
        name = f"events_{power_label(power)}mW.{extension}" if power is not None else f"events.{extension}"
        path = _output_path(config, name)
        with EventWriter(path, sim_config.timestamp_resolution_ns) as writer:
            singles = np.zeros(2, dtype=np.int64)
            for block in iter_event_blocks(sim_config, config.simulation['block_duration_s']):
                writer.write(block)
                singles += block.singles()
        duration = sim_config.duration_s
        runs.append({
            'power_mW': power,
            'events_file': name,
            'seed': seed,
            'duration_s': duration,
            'events': int(singles.sum()),
            'singles_a_per_s': singles[0] / duration,
            'singles_b_per_s': singles[1] / duration,
            'expected': expected_singles(sim_config),
            'signal_fraction': signal_fraction(sim_config),
            'background_rate_per_s': sim_config.background_rate,
            'rates': sim_config.rates.to_dict(),
        })
        KineticsLogger.log_data_processing(f"simulate {name}", int(singles.sum()), time.time() - start_time, True)
        logger.info(f"{name}: {int(singles.sum())} events, singles A {singles[0] / duration:.4g}/s, "
                    f"B {singles[1] / duration:.4g}/s")

    write_json(_output_path(config, 'simulation_summary.json'),
               {'provenance': provenance(config), 'runs': runs})
    print(f"simulated {len(runs)} event files, {sum(r['events'] for r in runs)} events, in {config.output_dir}")
    return 0


def _histogram_from_events(path: str, config: RunConfig):
    correlation = config.correlation
    window = config.window
    if correlation['n_slices'] > 1:
        return correlate_sliced(read_events(path), correlation['bin_width_ns'], window, correlation['mode'],
                                n_slices=correlation['n_slices'])
    return correlate_blocks(iter_event_file(path), correlation['bin_width_ns'], window, correlation['mode'])


def cmd_correlate(args: argparse.Namespace) -> int:
    config = _load(args)
    for path in args.inputs:
        hist = _histogram_from_events(path, config)
        stem = _stem(path)
        write_histogram(_output_path(config, f"histogram_{stem}.csv"), hist)
        curve = normalize(hist, correct_first_stop=config.correlation['correct_first_stop'])
        table = pd.DataFrame({'tau_ns': curve.tau_ns, 'g2': curve.g2, 'sigma': curve.sigma})
        write_curve_output(_output_path(config, f"g2_raw_{stem}.csv"), curve, table, config.format)
        logger.info(f"{stem}: {hist.total_coincidences} coincidences in {hist.n_bins} bins, "
                    f"singles {hist.singles_a}/{hist.singles_b} over {hist.duration_s:g} s")
    print(f"correlated {len(args.inputs)} event files into {config.output_dir}")
    return 0


def _analyze_curve(curve: G2Curve, rho: Optional[float], config: RunConfig,
                   brightness: Optional[float]) -> CurveAnalysis:
    raw_curve = curve
    if rho is not None and rho < 1.0 and not curve.is_background_corrected:
        curve = background_correct(curve, rho)
    fit = fit_g2(curve, fit_amplitude=config.analysis['fit_amplitude'],
                 fit_offset=config.analysis['fit_offset'], max_iterations=Config.FIT_MAX_ITERATIONS)
    return CurveAnalysis(histogram=None, raw_curve=raw_curve, curve=curve, fit=fit,
                         rho=curve.rho if curve.rho is not None else 1.0,
                         brightness=brightness if brightness is not None else float('nan'),
                         brightness_std=0.0)


def _write_rates(path: str, point_doc: Dict[str, Any], fit: FitResult, brightness: float,
                 eta: DetectionEfficiency, k21_hint: Optional[float], power: Optional[float]) -> None:
    """rates.json for one analyzed input; ambiguous inversions list their candidates and re-raise"""
    try:
        rates = rates_from_observables(fit.g_e, fit.k_tm, fit.k_1m, brightness, eta, k21_hint=k21_hint)
    except AmbiguousSolutionError as e:
        write_json(path, {'eta': eta.eta, 'ambiguous': True,
                          'candidates': [candidate.to_dict() for candidate in e.candidates]})
        raise
    document = {'eta': eta.eta, 'power_mW': power, 'rates': rates.to_dict()}
    if power is not None and brightness > 0.0:
        point = PowerPoint(power_mW=power, curve=None, brightness=brightness, fit=fit,
                           brightness_std=point_doc.get('brightness_std_counts_per_s', 0.0))
        document['rate_std'] = {f"{name}_per_ns": value
                                for name, value in rate_uncertainties(point, eta, rates).items()}
    write_json(path, document)
    logger.info(f"rates (1/ns): k12 {rates.k12:.4g}, k21 {rates.k21:.4g}, k23 {rates.k23:.4g}, k32 {rates.k32:.4g}")


def cmd_analyze(args: argparse.Namespace) -> int:
    """correlate -> normalize -> background_correct -> fit_g2 -> inversion for each input"""
    config = _load(args)
    rho = args.rho if args.rho is not None else config.analysis['rho']
    k21_hint = args.k21_hint if args.k21_hint is not None else config.analysis['k21_hint']
    eta = _eta(config, args.eta, required=False)
    multiple = len(args.inputs) > 1

    for path in args.inputs:
        stem = _stem(path) if multiple else None
        kind = file_kind(path)
        if kind == 'curve':
            analysis = _analyze_curve(read_curve(path), rho, config, args.brightness)
        else:
            hist = read_histogram(path) if kind == 'histogram' else _histogram_from_events(path, config)
            analysis = analyze_histogram(hist, rho, config.analysis, config.correlation['correct_first_stop'])

        fit = analysis.fit
        table = compare_models(analysis.curve, fit)
        table = table[['tau_ns', 'g2', 'sigma', 'g2_fit']]
        write_curve_output(_output_path(config, 'g2_curve.csv', stem), analysis.curve, table, config.format)

        brightness = analysis.brightness if np.isfinite(analysis.brightness) else None
        point_doc = {
            'source': os.path.basename(path),
            'power_mW': args.power,
            'rho': analysis.rho,
            'brightness_counts_per_s': brightness,
            'brightness_std_counts_per_s': analysis.brightness_std,
            'g2_zero_raw': float(analysis.raw_curve.g2[np.argmin(np.abs(analysis.raw_curve.tau_ns))]),
            'g2_zero': float(analysis.curve.g2[np.argmin(np.abs(analysis.curve.tau_ns))]),
            'flags': list(analysis.curve.flags) + ([] if fit.converged else ['not_converged']),
            'fit': fit.to_dict(),
        }
        write_json(_output_path(config, 'g2_fit.json', stem), point_doc)
        logger.info(f"{os.path.basename(path)}: g_e {fit.g_e:.4g}, k_tm {fit.k_tm:.4g}/ns, k_1m {fit.k_1m:.4g}/ns, "
                    f"chi2/dof {fit.reduced_chi2:.3f}{'' if fit.converged else ' (NOT CONVERGED)'}")

        if config.analysis['require_converged']:
            require_converged(fit, stage=f"fit_g2 on {os.path.basename(path)}")

        if eta is not None and brightness is not None:
            _write_rates(_output_path(config, 'rates.json', stem), point_doc, fit, brightness, eta, k21_hint,
                         args.power)
        else:
            logger.info(f"{path}: no eta or brightness available, rate inversion skipped")
    print(f"analyzed {len(args.inputs)} inputs into {config.output_dir}")
    return 0


def cmd_invert(args: argparse.Namespace) -> int:
    config = _load(args)
    brightness = args.brightness
    power = None
    if args.fit_file:
        document = read_json(args.fit_file)
        fit = FitResult.from_dict(document['fit'])
        g_e, k_tm, k_1m = fit.g_e, fit.k_tm, fit.k_1m
        brightness = brightness if brightness is not None else document.get('brightness_counts_per_s')
        power = document.get('power_mW')
    else:
        missing = [flag for flag, value in (('--g-e', args.g_e), ('--k-tm', args.k_tm), ('--k-1m', args.k_1m))
                   if value is None]
        if missing:
            raise ConfigValidationError(f"missing {', '.join(missing)} (or pass --fit)", field='inputs')
        g_e, k_tm, k_1m = args.g_e, args.k_tm, args.k_1m

    if args.sigma2_inf is not None:
        rates = rates_from_derived(DerivedParams(g_e, k_tm, k_1m, args.sigma2_inf))
        document = {'sigma2_inf': args.sigma2_inf, 'rates': rates.to_dict()}
    else:
        if brightness is None:
            raise ConfigValidationError("pass --sigma2-inf, or --brightness with an eta", field='brightness')
        eta = _eta(config, args.eta)
        k21_hint = args.k21_hint if args.k21_hint is not None else config.analysis['k21_hint']
        rates = rates_from_observables(g_e, k_tm, k_1m, brightness, eta, k21_hint=k21_hint)
        document = {'eta': eta.eta, 'brightness_counts_per_s': brightness, 'power_mW': power,
                    'rates': rates.to_dict()}

    write_json(_output_path(config, 'rates.json'), document)
    print(f"k12 {rates.k12:.6g}  k21 {rates.k21:.6g}  k23 {rates.k23:.6g}  k32 {rates.k32:.6g}  (1/ns)")
    return 0


def cmd_calibrate_eta(args: argparse.Namespace) -> int:
    config = _load(args)
    points = _read_points(args.inputs)
    analysis = config.analysis
    calibration = calibrate_eta(points, (analysis['eta_min'], analysis['eta_max']), analysis['eta_grid_points'])
    document = calibration.to_dict()
    document['rates'] = [rates.to_dict() for rates in calibration.rates]
    document['grid'] = {'eta': calibration.grid_eta, 'k21_rsd': calibration.grid_objective}
    write_json(_output_path(config, 'eta_calibration.json'), document)
    print(f"eta = {calibration.eta.eta:.5g}; k21 = {calibration.k21_mean:.5g}/ns "
          f"(spread {calibration.dispersion:.2%} over {len(points)} powers)")
    return 0


def cmd_power_fit(args: argparse.Namespace) -> int:
    config = _load(args)
    points = _read_points(args.inputs)
    analysis = dict(config.analysis)
    if args.calibration:
        analysis['eta'] = _calibration_field(args.calibration, 'eta')
        if analysis['k21_hint'] is None:
            analysis['k21_hint'] = read_json(args.calibration).get('k21_mean_per_ns')
    if args.eta is not None:
        analysis['eta'] = args.eta
    eta, _ = resolve_eta(points, analysis)
    power_fit = extract_power_model(points, weighted=analysis['weighted_regression'])

    document = power_fit.to_dict()
    document['eta'] = eta.eta
    document['points'] = [point.to_dict() for point in points]
    write_json(_output_path(config, 'power_model.json'), document)
    model = power_fit.model
    print(f"k12 = {model.k12_slope:.4g}*P + {model.k12_intercept:.4g}; "
          f"k23 = {model.k23_slope:.4g}*P + {model.k23_intercept:.4g}; "
          f"k32 = {model.k32_slope:.4g}*P + {model.k32_intercept:.4g}; k21 = {model.k21:.4g} (1/ns, mW)")
    return 0


def cmd_saturation(args: argparse.Namespace) -> int:
    config = _load(args)
    table = read_saturation(args.input)
    if args.power_model:
        seed_model = PowerModel.from_dict(read_json(args.power_model)['model'])
    else:
        seed_model = config.power_model()
        if seed_model is None:
            raise ConfigValidationError("no seed model: pass --power-model or configure one", field='power_model')
    eta = _eta(config, args.eta, args.calibration)

    sigma = table['counts_std_per_s'].to_numpy() if 'counts_std_per_s' in table.columns else None
    data = list(zip(table['power_mW'].tolist(), table['counts_per_s'].tolist()))
    fit = fit_saturation(data, seed_model, eta, free_coefficients=config.saturation['free_coefficients'],
                         sigma=sigma)

    powers = table['power_mW'].to_numpy()
    output = pd.DataFrame({
        'power_mW': powers,
        'counts_per_s': table['counts_per_s'].to_numpy(),
        'model_counts_per_s': saturation_curve(fit.model, powers, eta),
        'two_level_counts_per_s': two_level_reference_curve(fit.model, powers, eta),
    })
    write_output(_output_path(config, 'saturation.csv'), output, config.format)
    write_json(_output_path(config, 'saturation_fit.json'), fit.to_dict())
    print(f"saturation fit over {len(powers)} powers: chi2/dof {fit.reduced_chi2:.3f}; "
          + ", ".join(f"{name} {value:.4g}" for name, value in
                      ((n, getattr(fit.model, n)) for n in fit.free_coefficients)))
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    config = _load(args, require_seed=True)
    report = run_pipeline(config)
    if report.truth is not None:
        logger.info(f"truth comparison:\n{report.truth.to_string(index=False)}")
    logger.info(f"outputs in {config.output_dir}: {', '.join(report.files + ['report.json'])}")
    print(f"eta = {report.eta.eta:.5g}, k21 = {report.power_fit.model.k21:.5g}/ns")
    return 0


COMMANDS = {
    'simulate': cmd_simulate,
    'correlate': cmd_correlate,
    'analyze': cmd_analyze,
    'invert': cmd_invert,
    'calibrate-eta': cmd_calibrate_eta,
    'power-fit': cmd_power_fit,
    'saturation': cmd_saturation,
    'pipeline': cmd_pipeline,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and map errors to exit codes"""
    parser = build_parser()
    args = parser.parse_args(argv)

    details = get_validation_details()
    for warning in details['warnings']:
        logger.warning(f"Configuration: {warning}")
    if details['has_errors']:
        for error in details['errors']:
            logger.error(f"Configuration: {error}")
            print(f"error: {error}", file=sys.stderr)
        return ConfigValidationError.exit_code

    KineticsLogger.log_command(args.command, ' '.join(argv if argv is not None else sys.argv[1:]))
    try:
        return COMMANDS[args.command](args)
    except G2KineticsError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        if isinstance(e, ConfigValidationError) and e.field == 'power_model_preset':
            print(f"available presets: {', '.join(list_presets())}", file=sys.stderr)
        return e.exit_code
