# cli/pipeline.py
"""
End-to-end closed loop: simulate each ladder power, analyze its g2 curve,
calibrate eta, regress the rates on power and fit the saturation curve
"""

import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from cli.run_config import RunConfig
from data.event_files import EventWriter
from data.result_files import write_curve, write_json, write_table
from estimation.background import background_correct, brightness_std, estimate_brightness
from estimation.calibration import calibrate_eta, fill_rates, invert_point, rate_uncertainties
from estimation.comparison import compare_models, constant_trap_rates, truth_comparison
from estimation.g2_fit import fit_g2, require_converged
from estimation.models import EtaCalibration, FitResult, PowerModelFit, PowerPoint, SaturationFit
from estimation.power_fit import extract_power_model
from estimation.saturation import fit_saturation
from kinetics.models import DetectionEfficiency, PowerModel, RateConstants
from kinetics.power import rates_at_power, saturation_curve, two_level_reference_curve
from kinetics.rate_equations import count_rate
from photon_sim.correlator import StreamingCorrelator
from photon_sim.models import CoincidenceHistogram, G2Curve, SimConfig
from photon_sim.normalization import normalize
from photon_sim.simulator import iter_event_blocks, signal_fraction
from utils.config import Config
from utils.errors import ConfigValidationError, G2KineticsError
from utils.logging_config import KineticsLogger, get_logger
from utils.thread_manager import run_ordered

logger = get_logger('pipeline')

MIN_LADDER_POWERS = 3


def power_label(power_mW: float) -> str:
    """File-name form of a power: 0.3 -> '0.3', 31.0 -> '31'"""
    return f"{power_mW:g}"


def _tag_stage(error: G2KineticsError, stage: str) -> G2KineticsError:
    """Prefix the failing stage to the error message, keeping its class and exit code"""
    if not getattr(error, 'stage', None):
        error.stage = stage
        if error.args:
            error.args = (f"[{stage}] {error.args[0]}",) + tuple(error.args[1:])
    return error


@dataclass
class CurveAnalysis:
    """Everything derived from one delay histogram"""
    histogram: Optional[CoincidenceHistogram]
    raw_curve: G2Curve
    curve: G2Curve
    fit: FitResult
    rho: float
    brightness: float
    brightness_std: float


def analyze_histogram(hist: CoincidenceHistogram, rho: Optional[float], analysis: Dict[str, Any],
                      correct_first_stop: bool = False) -> CurveAnalysis:
    """
    normalize -> background_correct -> fit_g2 on one histogram

    A missing rho means the stream is taken as background free. The fit is
    returned even when it did not converge; callers decide whether to require it.
    """
    raw_curve = normalize(hist, correct_first_stop=correct_first_stop)
    rho = 1.0 if rho is None else rho
    curve = background_correct(raw_curve, rho) if rho < 1.0 else raw_curve
    fit = fit_g2(curve, fit_amplitude=analysis['fit_amplitude'], fit_offset=analysis['fit_offset'],
                 max_iterations=Config.FIT_MAX_ITERATIONS)
    return CurveAnalysis(
        histogram=hist,
        raw_curve=raw_curve,
        curve=curve,
        fit=fit,
        rho=rho,
        brightness=estimate_brightness(hist, rho),
        brightness_std=float(brightness_std(hist, rho)),
    )


def simulate_histogram(sim_config: SimConfig, correlation: Dict[str, Any],
                       block_duration_s: Optional[float] = None,
                       events_path: Optional[str] = None) -> CoincidenceHistogram:
    """Stream a simulated acquisition through the correlator, optionally saving the events"""
    correlator = StreamingCorrelator(correlation['bin_width_ns'],
                                     (correlation['tau_min_ns'], correlation['tau_max_ns']),
                                     correlation['mode'], resolution_ns=sim_config.timestamp_resolution_ns)
    writer = EventWriter(events_path, sim_config.timestamp_resolution_ns) if events_path else None
    try:
        for block in iter_event_blocks(sim_config, block_duration_s):
            correlator.add(block)
            if writer is not None:
                writer.write(block)
    finally:
        if writer is not None:
            writer.close()
    return correlator.finalize()


@dataclass
class PowerStage:
    """One ladder power after simulation and curve analysis"""
    power_mW: float
    truth: RateConstants
    sim_config: SimConfig
    analysis: CurveAnalysis
    expected_rho: float

    def point(self) -> PowerPoint:
        return PowerPoint(power_mW=self.power_mW, curve=self.analysis.curve,
                          brightness=self.analysis.brightness, fit=self.analysis.fit,
                          brightness_std=self.analysis.brightness_std)


def _run_power(config: RunConfig, power_mW: float, seed: int) -> PowerStage:
    stage = f"power {power_label(power_mW)} mW"
    start_time = time.time()
    try:
        truth = config.rates_at(power_mW)
        sim_config = config.sim_config(truth, seed)
        events_path = None
        if config.simulation['write_events']:
            extension = 'bin' if config.simulation['event_format'] == 'binary' else 'csv'
            events_path = os.path.join(config.output_dir, f"events_{power_label(power_mW)}mW.{extension}")
        hist = simulate_histogram(sim_config, config.correlation, config.simulation.get('block_duration_s'),
                                  events_path)
        expected_rho = signal_fraction(sim_config)['rho']
        rho = config.analysis['rho'] if config.analysis['rho'] is not None else expected_rho
        analysis = analyze_histogram(hist, rho, config.analysis, config.correlation['correct_first_stop'])
        if config.analysis['require_converged']:
            require_converged(analysis.fit, stage=f"fit_g2 at {stage}")
    except G2KineticsError as e:
        raise _tag_stage(e, stage)

    KineticsLogger.log_data_processing(f"pipeline {stage}", hist.singles_a + hist.singles_b,
                                       time.time() - start_time, True)
    return PowerStage(power_mW=power_mW, truth=truth, sim_config=sim_config,
                      analysis=analysis, expected_rho=expected_rho)


@dataclass
class PipelineReport:
    """Aggregated outputs of one closed-loop run"""
    provenance: Dict[str, Any]
    points: List[PowerPoint]
    calibration: Optional[EtaCalibration]
    eta: DetectionEfficiency
    power_fit: PowerModelFit
    saturation: Optional[SaturationFit]
    truth: Optional[pd.DataFrame] = None
    files: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'provenance': self.provenance,
            'eta': self.eta.eta,
            'eta_calibration': self.calibration.to_dict() if self.calibration is not None else None,
            'points': [point.to_dict() for point in self.points],
            'power_model': self.power_fit.to_dict(),
            'saturation': self.saturation.to_dict() if self.saturation is not None else None,
            'truth_comparison': self.truth.to_dict(orient='records') if self.truth is not None else None,
            'files': list(self.files),
        }


def provenance(config: RunConfig) -> Dict[str, Any]:
    return {
        'seed': config.seed,
        'config_sha256': config.config_hash(),
        'artifact': Config.APP_NAME,
        'artifact_version': Config.APP_VERSION,
        'created_at': datetime.now(timezone.utc).isoformat(timespec='seconds'),
    }


def resolve_eta(points: List[PowerPoint], analysis: Dict[str, Any]) -> Tuple[DetectionEfficiency, Optional[EtaCalibration]]:
    """Known eta from the config, else the calibrated one; rates are attached to the points"""
    if analysis['eta'] is not None:
        eta = DetectionEfficiency(analysis['eta'])
        for point in points:
            point.rates = invert_point(point, eta, k21_hint=analysis['k21_hint'])
            point.rate_std = rate_uncertainties(point, eta, point.rates)
        return eta, None
    calibration = calibrate_eta(points, (analysis['eta_min'], analysis['eta_max']), analysis['eta_grid_points'])
    fill_rates(points, calibration)
    return calibration.eta, calibration


def truth_table(model: PowerModel, eta: float, power_fit: PowerModelFit,
                estimated_eta: DetectionEfficiency) -> pd.DataFrame:
    """Ground truth against recovered eta and power-model coefficients"""
    truth = {'eta': eta}
    truth.update({name: getattr(model, name) for name in PowerModel.COEFFICIENTS})
    estimate = {'eta': estimated_eta.eta}
    estimate.update({name: getattr(power_fit.model, name) for name in PowerModel.COEFFICIENTS})
    return truth_comparison(truth, estimate)


def write_output(path: str, table: pd.DataFrame, fmt: str) -> str:
    """Write a plain table as CSV, or as column lists in JSON"""
    if fmt == 'json':
        path = os.path.splitext(path)[0] + '.json'
        write_json(path, table.to_dict(orient='list'))
    else:
        write_table(path, table)
    return path


def write_curve_output(path: str, curve: G2Curve, table: pd.DataFrame, fmt: str) -> str:
    """Curve plus overlay columns (everything after tau_ns, g2, sigma)"""
    if fmt == 'json':
        path = os.path.splitext(path)[0] + '.json'
        write_json(path, {'rho': curve.rho, 'bin_width_ns': curve.bin_width_ns, 'mode': curve.mode,
                          'flags': list(curve.flags), **table.to_dict(orient='list')})
    else:
        overlays = {name: table[name].to_numpy() for name in table.columns[3:]}
        write_curve(path, curve, overlays)
    return path


def write_power_curves(config: RunConfig, stages: List[PowerStage], power_fit: PowerModelFit) -> List[str]:
    """g2_curve_<P>mW overlays: fit, power-model prediction and the optional constant-trap model"""
    written = []
    k23, k32 = config.comparison['k23'], config.comparison['k32']
    for stage in stages:
        fit = stage.analysis.fit
        try:
            model_rates = rates_at_power(power_fit.model, stage.power_mW)
        except G2KineticsError as e:
            logger.warning(f"No power-model overlay at {stage.power_mW:g} mW: {e}")
            model_rates = None
        constant = None
        if model_rates is not None and k23 is not None and k32 is not None:
            constant = constant_trap_rates(model_rates, k23, k32)
        table = compare_models(stage.analysis.curve, fit, model_rates, constant)
        path = os.path.join(config.output_dir, f"g2_curve_{power_label(stage.power_mW)}mW.csv")
        written.append(write_curve_output(path, stage.analysis.curve, table, config.format))
    return written


def write_saturation_table(config: RunConfig, points: List[PowerPoint], model: PowerModel,
                           eta: DetectionEfficiency) -> str:
    powers = np.array([p.power_mW for p in points])
    table = pd.DataFrame({
        'power_mW': powers,
        'counts_per_s': [p.brightness for p in points],
        'counts_std_per_s': [p.brightness_std for p in points],
        'model_counts_per_s': saturation_curve(model, powers, eta),
        'two_level_counts_per_s': two_level_reference_curve(model, powers, eta),
    })
    return write_output(os.path.join(config.output_dir, 'saturation.csv'), table, config.format)


def run_pipeline(config: RunConfig) -> PipelineReport:
    """
    Full closed loop over the power ladder

    Raises:
        ConfigValidationError: fewer than 3 powers, no power model or no seed
        G2KineticsError: the first failing stage, its message prefixed with the stage name
    """
    ladder = config.power_ladder
    if len(ladder) < MIN_LADDER_POWERS:
        raise ConfigValidationError(f"needs at least {MIN_LADDER_POWERS} powers, got {len(ladder)}",
                                    field='power_ladder_mW')
    truth_model = config.power_model()
    if truth_model is None:
        raise ConfigValidationError("pipeline needs power_model or power_model_preset", field='power_model')

    start_time = time.time()
    os.makedirs(config.output_dir, exist_ok=True)
    seeds = config.power_seeds(len(ladder))
    logger.info(f"Pipeline over {len(ladder)} powers ({ladder[0]:g}-{ladder[-1]:g} mW), seed {config.seed}")

    stages = run_ordered(lambda item: _run_power(config, *item), list(zip(ladder, seeds)),
                         prefix='pipeline-power')
    points = [stage.point() for stage in stages]

    try:
        eta, calibration = resolve_eta(points, config.analysis)
    except G2KineticsError as e:
        raise _tag_stage(e, 'calibrate_eta')
    try:
        power_fit = extract_power_model(points, weighted=config.analysis['weighted_regression'])
    except G2KineticsError as e:
        raise _tag_stage(e, 'extract_power_model')

    saturation = None
    if config.saturation['fit']:
        try:
            saturation = fit_saturation([(p.power_mW, p.brightness) for p in points], power_fit.model, eta,
                                        free_coefficients=config.saturation['free_coefficients'],
                                        sigma=[max(p.brightness_std, 1e-12) for p in points])
        except G2KineticsError as e:
            raise _tag_stage(e, 'fit_saturation')

    files = write_power_curves(config, stages, power_fit)
    files.append(write_saturation_table(config, points, power_fit.model, eta))

    report = PipelineReport(
        provenance=provenance(config),
        points=points,
        calibration=calibration,
        eta=eta,
        power_fit=power_fit,
        saturation=saturation,
        truth=truth_table(truth_model, config.simulation['eta'], power_fit, eta),
        files=[os.path.basename(path) for path in files],
    )
    report_path = os.path.join(config.output_dir, 'report.json')
    write_json(report_path, report.to_dict())

    KineticsLogger.log_data_processing("pipeline", len(ladder), time.time() - start_time, True)
    logger.info(f"Pipeline finished: eta = {eta.eta:.4g}, k21 = {power_fit.model.k21:.4g} /ns; "
                f"report at {report_path}")
    return report


def expected_singles(sim_config: SimConfig) -> Dict[str, float]:
    """Mean per-detector click rates of a simulated stream"""
    signal = count_rate(sim_config.rates, sim_config.eta) if sim_config.rates.k12 > 0.0 else 0.0
    ratio = sim_config.beamsplit_ratio
    return {
        'singles_a_per_s': ratio * signal + sim_config.noise_rate,
        'singles_b_per_s': (1.0 - ratio) * signal + sim_config.noise_rate,
    }
