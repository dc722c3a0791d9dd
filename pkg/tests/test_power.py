# tests/test_power.py

import numpy as np
import pytest

from config.presets import REFERENCE_ETA, K21_PER_NS, get_power_model, list_presets
from kinetics.models import PowerModel
from kinetics.power import rates_at_power, saturation_curve, two_level_count_rate, two_level_reference_curve
from kinetics.rate_equations import count_rate
from utils.errors import ConfigValidationError, InvalidParameterError, PowerOutOfRangeError


def test_presets_build():
    for name in list_presets():
        model = get_power_model(name)
        assert model.k21 == pytest.approx(K21_PER_NS)
        assert model.k23_slope > model.k32_slope


def test_unknown_preset():
    with pytest.raises(ConfigValidationError) as excinfo:
        get_power_model('ruby')
    assert excinfo.value.field == 'power_model_preset'


def test_rates_are_linear_in_power(preset_model):
    rates = rates_at_power(preset_model, 8.0)
    assert rates.k12 == pytest.approx(preset_model.k12_slope * 8.0 + preset_model.k12_intercept)
    assert rates.k23 == pytest.approx(preset_model.k23_slope * 8.0 + preset_model.k23_intercept)
    assert rates.k32 == pytest.approx(preset_model.k32_slope * 8.0 + preset_model.k32_intercept)
    assert rates.k21 == preset_model.k21


def test_power_outside_validity_range(preset_model):
    with pytest.raises(PowerOutOfRangeError):
        rates_at_power(preset_model, preset_model.p_max * 2.0)


def test_model_negative_inside_range_rejected():
    with pytest.raises(InvalidParameterError):
        PowerModel(k12_slope=0.03, k12_intercept=0.0, k21=0.0862, k23_slope=-0.001, k23_intercept=0.001,
                   k32_slope=0.0003, k32_intercept=0.002, p_min=0.0, p_max=10.0)


def test_power_model_dict_round_trip(preset_model):
    assert PowerModel.from_dict(preset_model.to_dict()) == preset_model


def test_saturation_curve_matches_count_rate(preset_model):
    powers = np.array([0.3, 3.0, 31.0])
    curve = saturation_curve(preset_model, powers, REFERENCE_ETA)
    expected = [count_rate(rates_at_power(preset_model, p), REFERENCE_ETA) for p in powers]
    np.testing.assert_allclose(curve, expected, rtol=1e-12)
    assert np.all(np.diff(curve) > 0.0)


def test_shelving_lowers_saturation(preset_model):
    top = 31.0
    shelved = saturation_curve(preset_model, [top], REFERENCE_ETA)[0]
    reference = two_level_reference_curve(preset_model, [top], REFERENCE_ETA)[0]
    assert shelved < reference


def test_two_level_count_rate_saturates():
    k21 = 0.0862
    assert two_level_count_rate(1e3, k21, 1.0) == pytest.approx(k21 * 1e9, rel=1e-4)
    assert two_level_count_rate(k21, k21, 0.5) == pytest.approx(0.25 * k21 * 1e9)
