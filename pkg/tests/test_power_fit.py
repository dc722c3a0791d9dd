# tests/test_power_fit.py

import numpy as np
import pytest

from cli.run_config import load_run_config
from config.presets import REFERENCE_ETA
from estimation.power_fit import extract_power_model
from estimation.saturation import fit_saturation
from kinetics.power import rates_at_power, saturation_curve
from utils.errors import PreconditionError

LADDER = (0.3, 1.0, 3.0, 8.0, 16.0, 31.0)


def with_true_rates(points, model):
    for point in points:
        point.rates = rates_at_power(model, point.power_mW)
    return points


class TestExtractPowerModel:
    def test_exact_rates_give_exact_model(self, ladder_points, preset_model):
        fit = extract_power_model(with_true_rates(ladder_points(), preset_model))
        model = fit.model
        for name in ('k12_slope', 'k23_slope', 'k32_slope', 'k23_intercept', 'k32_intercept'):
            assert getattr(model, name) == pytest.approx(getattr(preset_model, name), rel=1e-8)
        assert model.k12_intercept == pytest.approx(0.0, abs=1e-12)
        assert model.k21 == pytest.approx(preset_model.k21, rel=1e-12)
        assert (model.p_min, model.p_max) == (0.3, 31.0)
        assert np.all(np.abs(fit.residuals['k23']) < 1e-12)

    def test_uniform_weights_without_rate_errors(self, ladder_points, preset_model):
        fit = extract_power_model(with_true_rates(ladder_points(), preset_model))
        assert not fit.weighted

    def test_inverse_variance_weights(self, ladder_points, preset_model):
        points = with_true_rates(ladder_points(), preset_model)
        for point in points:
            point.rate_std = {name: 0.01 * getattr(point.rates, name) for name in ('k12', 'k21', 'k23', 'k32')}
        fit = extract_power_model(points)
        assert fit.weighted
        assert fit.model.k23_slope == pytest.approx(preset_model.k23_slope, rel=1e-8)
        assert fit.std_errors['k21'] > 0.0

    def test_too_few_points(self, ladder_points, preset_model):
        with pytest.raises(PreconditionError):
            extract_power_model(with_true_rates(ladder_points(powers=(1.0, 8.0)), preset_model))

    def test_rates_required(self, ladder_points):
        with pytest.raises(PreconditionError):
            extract_power_model(ladder_points())

    def test_equal_powers_rank_deficient(self, ladder_points, preset_model):
        with pytest.raises(PreconditionError):
            extract_power_model(with_true_rates(ladder_points(powers=(5.0, 5.0, 5.0)), preset_model))


class TestSaturation:
    def saturation_data(self, model, powers=LADDER):
        counts = saturation_curve(model, powers, REFERENCE_ETA)
        return list(zip(powers, counts))

    def test_single_slope_recovered(self, preset_model):
        seed = preset_model.with_coefficients(k12_slope=preset_model.k12_slope * 1.1)
        fit = fit_saturation(self.saturation_data(preset_model), seed, REFERENCE_ETA,
                             free_coefficients=('k12_slope',))
        assert fit.converged
        assert fit.model.k12_slope == pytest.approx(preset_model.k12_slope, rel=1e-6)
        assert fit.reduced_chi2 < 1e-6

    def test_exact_data_fitted(self, preset_model):
        seed = preset_model.with_coefficients(
            k12_slope=preset_model.k12_slope * 1.1,
            k23_slope=preset_model.k23_slope * 0.9,
            k32_slope=preset_model.k32_slope * 1.1,
        )
        data = self.saturation_data(preset_model)
        fit = fit_saturation(data, seed, REFERENCE_ETA)
        np.testing.assert_allclose(fit.predicted, [n for _, n in data], rtol=1e-3)
        assert np.all(fit.reference >= fit.predicted)
        assert fit.free_coefficients == ('k12_slope', 'k23_slope', 'k32_slope')

    def test_pipeline_coefficients_absorb_calibration_error(self, preset_model):
        free = load_run_config().saturation['free_coefficients']
        seed = preset_model.with_coefficients(k21=preset_model.k21 * 0.98)
        data = self.saturation_data(preset_model)
        fit = fit_saturation(data, seed, REFERENCE_ETA * 1.04, free_coefficients=free)
        assert fit.model.k21 == seed.k21
        np.testing.assert_allclose(fit.predicted, [n for _, n in data], rtol=1e-4)
        assert fit.reduced_chi2 < 1e-2

    def test_too_few_points(self, preset_model):
        with pytest.raises(PreconditionError):
            fit_saturation(self.saturation_data(preset_model, (1.0, 3.0, 8.0)), preset_model, REFERENCE_ETA)

    def test_unknown_coefficient(self, preset_model):
        with pytest.raises(PreconditionError):
            fit_saturation(self.saturation_data(preset_model), preset_model, REFERENCE_ETA,
                           free_coefficients=('k99_slope',))
