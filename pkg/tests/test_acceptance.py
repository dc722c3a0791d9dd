# tests/test_acceptance.py
"""
Closed-loop Monte-Carlo checks: simulate, correlate, fit and invert
Run with --runslow
"""

import numpy as np
import pytest

from cli.pipeline import analyze_histogram, run_pipeline, simulate_histogram
from cli.run_config import background_for_signal_fraction, load_run_config
from config.presets import K21_PER_NS, REFERENCE_ETA, REFERENCE_RHO, get_power_model
from estimation.background import background_correct
from estimation.comparison import confidence_ellipsoid_contains
from kinetics.rate_equations import count_rate, derived_from_rates, g2_analytic, g2_bin_averaged
from photon_sim.normalization import normalize

pytestmark = pytest.mark.slow

CORRELATION = {'bin_width_ns': 1.0, 'tau_min_ns': -200.0, 'tau_max_ns': 200.0, 'mode': 'full_correlation'}
ANALYSIS = {'fit_amplitude': True, 'fit_offset': True}
SLOPES = ('k12_slope', 'k23_slope', 'k32_slope')


def pulls(curve, expected):
    return (curve.g2 - expected) / curve.sigma


def dip_estimate(curve, expected_shape, dip_shape, half_width_ns=50.0):
    """g2(0) of a curve: the model's value at zero plus the weighted mean pedestal near zero"""
    central = np.abs(curve.tau_ns) < half_width_ns
    weights = 1.0 / curve.sigma[central] ** 2
    pedestal = np.average(curve.g2[central] - expected_shape[central], weights=weights)
    return dip_shape + pedestal


def truth_vector(rates):
    derived = derived_from_rates(rates)
    return np.array([derived.g_e, derived.k_tm, derived.k_1m])


def test_normalized_histogram_matches_model(reference_sim_config, reference_rates):
    config = reference_sim_config(duration_s=60.0, seed=101)
    hist = simulate_histogram(config, CORRELATION)
    expected_singles = count_rate(reference_rates, config.eta) * 60.0
    assert abs(hist.singles_a + hist.singles_b - expected_singles) < 4.0 * np.sqrt(expected_singles)

    curve = normalize(hist)
    residual = pulls(curve, g2_bin_averaged(reference_rates, hist.edges_ns))
    assert hist.n_bins >= 100
    assert 0.7 < np.mean(residual ** 2) < 1.3
    assert np.max(np.abs(residual)) < 5.0


def test_background_correction_restores_dip(reference_sim_config, reference_rates):
    background = background_for_signal_fraction(reference_rates, REFERENCE_ETA, 0.5, 0.0, REFERENCE_RHO)
    config = reference_sim_config(duration_s=120.0, seed=202, background_rate=background)
    hist = simulate_histogram(config, CORRELATION)
    expected = g2_bin_averaged(reference_rates, hist.edges_ns)
    g2_zero = float(g2_analytic(reference_rates, np.array([0.0]))[0])
    assert g2_zero == pytest.approx(0.0, abs=1e-12)

    raw = normalize(hist)
    pedestal = 1.0 - REFERENCE_RHO ** 2
    assert pedestal == pytest.approx(0.344, abs=1e-3)
    diluted = pedestal + REFERENCE_RHO ** 2 * expected
    assert np.max(np.abs(pulls(raw, diluted))) < 5.0
    raw_dip = dip_estimate(raw, diluted, pedestal + REFERENCE_RHO ** 2 * g2_zero)
    assert raw_dip == pytest.approx(pedestal, abs=0.05)

    corrected = background_correct(raw, REFERENCE_RHO)
    assert np.max(np.abs(pulls(corrected, expected))) < 5.0
    # Finite bins average over the steep rise out of the dip, so the dip is read off the pedestal
    assert abs(dip_estimate(corrected, expected, g2_zero)) < 0.05


def test_simulated_fit_within_errors(reference_sim_config, reference_rates):
    hist = simulate_histogram(reference_sim_config(duration_s=60.0, seed=303), CORRELATION)
    analysis = analyze_histogram(hist, None, ANALYSIS)
    fit = analysis.fit
    assert fit.converged
    truth = truth_vector(reference_rates)
    assert np.all(np.abs(fit.parameters - truth) < 3.0 * fit.std_errors)


def test_confidence_ellipsoid_coverage(reference_sim_config, reference_rates):
    truth = truth_vector(reference_rates)
    children = np.random.SeedSequence(20240601).spawn(200)

    hits = 0
    for child in children:
        seed = int(child.generate_state(1, dtype=np.uint64)[0])
        # Higher efficiency buys coincidences per simulated event
        hist = simulate_histogram(reference_sim_config(duration_s=1.0, seed=seed, eta=0.03), CORRELATION)
        fit = analyze_histogram(hist, None, ANALYSIS).fit
        assert fit.converged
        hits += confidence_ellipsoid_contains(fit, truth, level=0.95)

    assert 0.90 <= hits / len(children) <= 0.99


def test_closed_loop_pipeline(tmp_path):
    config = load_run_config(overrides={'seed': 2024, 'output_dir': str(tmp_path)})
    report = run_pipeline(config)
    truth = get_power_model('nv_532nm')
    model = report.power_fit.model

    assert report.eta.eta == pytest.approx(REFERENCE_ETA, rel=0.05)
    assert model.k21 == pytest.approx(K21_PER_NS, rel=0.03)
    assert report.calibration.dispersion < 0.02
    for name in SLOPES:
        assert getattr(model, name) == pytest.approx(getattr(truth, name), rel=0.10)
    assert model.k23_slope > model.k32_slope
    assert (tmp_path / 'report.json').exists()
    assert report.truth is not None

    saturation = report.saturation
    assert len(saturation.predicted) == len(report.points)
    for point, predicted in zip(report.points, saturation.predicted):
        assert abs(point.brightness - predicted) < 3.0 * point.brightness_std
    assert saturation.predicted[-1] < saturation.reference[-1]


def test_closure_improves_with_duration(tmp_path):
    truth = get_power_model('nv_532nm')

    def run_for(duration_s):
        config = load_run_config(overrides={
            'seed': 77,
            'output_dir': str(tmp_path / f"{duration_s:g}s"),
            'power_ladder_mW': [1.0, 3.0, 8.0, 16.0, 31.0],
            'simulation': {'duration_s': duration_s},
        })
        return run_pipeline(config)

    short, long = run_for(15.0), run_for(60.0)

    for name in SLOPES:
        short_se, long_se = short.power_fit.std_errors[name], long.power_fit.std_errors[name]
        assert long_se < short_se / np.sqrt(2.0)
        short_error = abs(getattr(short.power_fit.model, name) - getattr(truth, name))
        long_error = abs(getattr(long.power_fit.model, name) - getattr(truth, name))
        # Either the error shrank by sqrt(2) or it already sits inside the longer run's noise
        assert long_error <= max(short_error / np.sqrt(2.0), 3.0 * long_se)

    short_eta_error = abs(short.eta.eta - REFERENCE_ETA)
    long_eta_error = abs(long.eta.eta - REFERENCE_ETA)
    assert long_eta_error <= max(short_eta_error / np.sqrt(2.0), 0.05 * REFERENCE_ETA)
