# tests/test_run_config.py

import pytest
import yaml

from cli.run_config import background_for_signal_fraction, deep_merge, load_run_config, parse_set_override
from config.presets import REFERENCE_RATES, REFERENCE_RHO, get_power_model
from photon_sim.models import SimConfig
from photon_sim.simulator import signal_fraction
from utils.errors import ConfigValidationError
from utils.input_sanitizer import RunConfigSanitizer


def write_yaml(tmp_path, document, name='run.yaml'):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(document), encoding='utf-8')
    return str(path)


class TestLoadRunConfig:
    def test_defaults_are_valid(self):
        config = load_run_config()
        assert config.seed is None
        assert config.power_ladder == [0.3, 1.0, 3.0, 8.0, 16.0, 31.0]
        assert config.power_model() == get_power_model('nv_532nm')
        assert config.window == (-500.0, 500.0)

    def test_unknown_key_names_field(self):
        with pytest.raises(ConfigValidationError) as excinfo:
            load_run_config(set_expressions=['simulation.bogus=1'])
        assert excinfo.value.field == 'simulation.bogus'

    def test_ladder_must_increase(self):
        with pytest.raises(ConfigValidationError) as excinfo:
            load_run_config(set_expressions=['power_ladder_mW=[1, 1, 3]'])
        assert excinfo.value.field == 'power_ladder_mW'

    def test_stochastic_commands_need_seed(self):
        with pytest.raises(ConfigValidationError) as excinfo:
            load_run_config(require_seed=True)
        assert excinfo.value.field == 'seed'

    def test_out_of_range_value(self):
        with pytest.raises(ConfigValidationError) as excinfo:
            load_run_config(set_expressions=['simulation.eta=1.5'])
        assert excinfo.value.field == 'simulation.eta'

    def test_uneven_window(self):
        with pytest.raises(ConfigValidationError) as excinfo:
            load_run_config(set_expressions=['correlation.bin_width_ns=3.0'])
        assert excinfo.value.field == 'correlation.bin_width_ns'

    def test_layers_override_in_order(self, tmp_path):
        path = write_yaml(tmp_path, {'seed': 5, 'simulation': {'duration_s': 2.0}})
        config = load_run_config(path, overrides={'seed': 9, 'output_dir': None},
                                 set_expressions=['simulation.duration_s=3.5'])
        assert config.seed == 9
        assert config.simulation['duration_s'] == 3.5
        assert config.simulation['eta'] == pytest.approx(3e-3)
        assert config.output_dir == 'results'

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigValidationError) as excinfo:
            load_run_config(str(tmp_path / 'absent.yaml'))
        assert excinfo.value.field == 'config'

    def test_explicit_power_model_displaces_preset(self, tmp_path):
        coefficients = {
            'k12_slope': 0.02, 'k12_intercept': 0.0, 'k21': 0.0862, 'k23_slope': 0.0005,
            'k23_intercept': 0.0005, 'k32_slope': 0.0002, 'k32_intercept': 0.002, 'p_min': 0.1, 'p_max': 40.0,
        }
        config = load_run_config(write_yaml(tmp_path, {'power_model': coefficients}))
        assert config.document['power_model_preset'] is None
        assert config.power_model().k12_slope == pytest.approx(0.02)

    def test_preset_and_model_together_rejected(self, tmp_path):
        document = {'power_model_preset': 'nv_514nm', 'power_model': {'k21': 0.0862}}
        with pytest.raises(ConfigValidationError) as excinfo:
            load_run_config(write_yaml(tmp_path, document))
        assert excinfo.value.field == 'power_model'

    def test_unknown_preset(self):
        with pytest.raises(ConfigValidationError) as excinfo:
            load_run_config(set_expressions=['power_model_preset=ruby'])
        assert excinfo.value.field == 'power_model_preset'

    def test_power_seeds(self):
        config = load_run_config(overrides={'seed': 42})
        seeds = config.power_seeds(6)
        assert seeds == config.power_seeds(6)
        assert len(set(seeds)) == 6
        assert seeds != load_run_config(overrides={'seed': 43}).power_seeds(6)

    def test_power_seeds_need_run_seed(self):
        with pytest.raises(ConfigValidationError):
            load_run_config().power_seeds(3)

    def test_hash_is_stable(self):
        first = load_run_config(overrides={'seed': 1}).config_hash()
        assert first == load_run_config(overrides={'seed': 1}).config_hash()
        assert first != load_run_config(overrides={'seed': 2}).config_hash()
        assert first == load_run_config(overrides={'seed': 1, 'output_dir': 'elsewhere'}).config_hash()

    def test_rates_without_ladder(self):
        config = load_run_config()
        assert config.rates_at(None) == REFERENCE_RATES
        assert config.rates_at(8.0).k12 == pytest.approx(0.0287 * 8.0)

    def test_sim_config_uses_signal_fraction(self):
        config = load_run_config(set_expressions=[f'simulation.signal_fraction={REFERENCE_RHO}'])
        sim = config.sim_config(REFERENCE_RATES, rng_seed=1)
        assert isinstance(sim, SimConfig)
        assert signal_fraction(sim)['rho'] == pytest.approx(REFERENCE_RHO, rel=1e-6)


class TestOverrides:
    def test_parse_nested(self):
        assert parse_set_override('simulation.duration_s=2.5') == {'simulation': {'duration_s': 2.5}}

    def test_parse_list_and_null(self):
        assert parse_set_override('power_ladder_mW=[1, 2.5]') == {'power_ladder_mW': [1, 2.5]}
        assert parse_set_override('analysis.rho=') == {'analysis': {'rho': None}}

    def test_parse_requires_equals(self):
        with pytest.raises(ConfigValidationError):
            parse_set_override('simulation.duration_s')

    def test_deep_merge_keeps_siblings(self):
        merged = deep_merge({'a': {'x': 1, 'y': 2}, 'b': 1}, {'a': {'y': 3}})
        assert merged == {'a': {'x': 1, 'y': 3}, 'b': 1}


def test_background_for_signal_fraction():
    background = background_for_signal_fraction(REFERENCE_RATES, 3e-3, 0.5, 0.0, REFERENCE_RHO)
    sim = SimConfig(rates=REFERENCE_RATES, eta=3e-3, duration_s=1.0, background_rate=background)
    assert signal_fraction(sim)['rho'] == pytest.approx(REFERENCE_RHO, rel=1e-6)
    assert background_for_signal_fraction(REFERENCE_RATES, 3e-3, 0.5, 0.0, 1.0) == 0.0


def test_sanitizer_accepts_numeric_strings():
    result = RunConfigSanitizer.sanitize_run_config({'simulation': {'eta': '1e-3'}})
    assert result['is_valid']
    assert result['config']['simulation']['eta'] == pytest.approx(1e-3)


def test_sanitizer_rejects_non_mapping():
    result = RunConfigSanitizer.sanitize_run_config(['seed'])
    assert not result['is_valid']
    assert RunConfigSanitizer.first_error(result)[0] == '<root>'
