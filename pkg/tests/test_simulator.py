# tests/test_simulator.py

import numpy as np
import pytest
from scipy import stats

from kinetics.models import RateConstants
from kinetics.rate_equations import count_rate
from photon_sim.models import SimConfig, EventStream, DETECTOR_A, DETECTOR_B
from photon_sim.simulator import (
    RenewalIntervalSampler, expected_event_count, iter_event_blocks, signal_fraction, simulate_events,
)
from utils.config import Config
from utils.errors import ConfigValidationError

DARK = RateConstants(k12=0.0, k21=0.0862, k23=0.01, k32=0.005)


def within_sigmas(observed, expected, sigmas=4.0):
    return abs(observed - expected) <= sigmas * np.sqrt(expected)


class TestSimConfig:
    def test_zero_duration_rejected(self, reference_rates):
        with pytest.raises(ConfigValidationError) as excinfo:
            SimConfig(rates=reference_rates, eta=3e-3, duration_s=0.0)
        assert excinfo.value.field == 'duration_s'

    def test_beamsplit_ratio_bounds(self, reference_rates):
        with pytest.raises(ConfigValidationError):
            SimConfig(rates=reference_rates, eta=3e-3, duration_s=1.0, beamsplit_ratio=1.0)

    def test_seed_must_be_unsigned(self, reference_rates):
        with pytest.raises(ConfigValidationError):
            SimConfig(rates=reference_rates, eta=3e-3, duration_s=1.0, rng_seed=-1)

    def test_unknown_method(self, reference_rates):
        with pytest.raises(ConfigValidationError):
            SimConfig(rates=reference_rates, eta=3e-3, duration_s=1.0, method='gillespie')

    def test_eta_validated(self, reference_rates):
        with pytest.raises(ConfigValidationError) as excinfo:
            SimConfig(rates=reference_rates, eta=1.5, duration_s=1.0)
        assert excinfo.value.field == 'eta'


class TestRenewalSampler:
    def test_survival_starts_at_one(self, reference_sim_config):
        sampler = RenewalIntervalSampler(reference_sim_config())
        assert sampler.survival(np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-12)

    def test_mean_interval_is_inverse_count_rate(self, reference_sim_config):
        config = reference_sim_config()
        sampler = RenewalIntervalSampler(config)
        assert sampler.mean_interval == pytest.approx(1e9 / count_rate(config.rates, config.eta), rel=1e-9)

    def test_samples_follow_survival(self, reference_sim_config, rng):
        sampler = RenewalIntervalSampler(reference_sim_config())
        draws = sampler.sample(rng, 20000)
        assert np.all(draws > 0.0)
        result = stats.kstest(draws, lambda t: 1.0 - sampler.survival(np.asarray(t)))
        assert result.pvalue > 1e-3


class TestSimulateEvents:
    def test_same_seed_same_stream(self, reference_sim_config):
        first = simulate_events(reference_sim_config(duration_s=0.2, seed=11))
        second = simulate_events(reference_sim_config(duration_s=0.2, seed=11))
        np.testing.assert_array_equal(first.ticks, second.ticks)
        np.testing.assert_array_equal(first.detectors, second.detectors)

    def test_different_seed_different_stream(self, reference_sim_config):
        first = simulate_events(reference_sim_config(duration_s=0.2, seed=11))
        second = simulate_events(reference_sim_config(duration_s=0.2, seed=12))
        assert len(first) != len(second) or not np.array_equal(first.ticks, second.ticks)

    def test_time_ordered_integer_ticks(self, reference_sim_config):
        stream = simulate_events(reference_sim_config(duration_s=0.2))
        assert stream.is_sorted
        assert stream.ticks.dtype == np.int64
        assert stream.duration_s == pytest.approx(0.2)

    def test_singles_match_count_rate(self, reference_sim_config):
        config = reference_sim_config(duration_s=2.0)
        stream = simulate_events(config)
        expected = count_rate(config.rates, config.eta) * config.duration_s
        assert within_sigmas(len(stream), expected)
        count_a, count_b = stream.singles()
        assert within_sigmas(count_a, 0.5 * expected)
        assert within_sigmas(count_b, 0.5 * expected)

    def test_beamsplit_ratio_routes_photons(self, reference_sim_config):
        config = reference_sim_config(duration_s=2.0, beamsplit_ratio=0.8)
        count_a, count_b = simulate_events(config).singles()
        expected = count_rate(config.rates, config.eta) * config.duration_s
        assert within_sigmas(count_a, 0.8 * expected)
        assert within_sigmas(count_b, 0.2 * expected)

    def test_jump_method_agrees_on_rate(self, reference_rates):
        # Unit efficiency keeps the transition walk short; bunching widens the count spread
        config = SimConfig(rates=reference_rates, eta=1.0, duration_s=1e-3, method='jump', rng_seed=9)
        stream = simulate_events(config)
        assert within_sigmas(len(stream), count_rate(config.rates, config.eta) * config.duration_s, 8.0)

    def test_empty_stream_without_excitation_or_noise(self):
        stream = simulate_events(SimConfig(rates=DARK, eta=3e-3, duration_s=1.0, rng_seed=1))
        assert len(stream) == 0
        assert stream.duration_s == pytest.approx(1.0)

    def test_background_is_poissonian(self):
        config = SimConfig(rates=DARK, eta=3e-3, duration_s=10.0, background_rate=1e3, rng_seed=5)
        stream = simulate_events(config)
        for detector in (DETECTOR_A, DETECTOR_B):
            times = stream.channel(detector) * stream.resolution_ns
            assert within_sigmas(times.size, 1e4)
            gaps = np.diff(times)
            result = stats.kstest(gaps, 'expon', args=(0.0, 1e9 / 1e3))
            assert result.pvalue > 1e-3

    def test_dead_time_spaces_clicks(self):
        config = SimConfig(rates=DARK, eta=3e-3, duration_s=1.0, background_rate=1e5,
                           dead_time_ns=1000.0, rng_seed=3)
        stream = simulate_events(config)
        for detector in (DETECTOR_A, DETECTOR_B):
            ticks = stream.channel(detector)
            assert np.all(np.diff(ticks) * stream.resolution_ns >= 1000.0 - stream.resolution_ns)

    def test_blocks_cover_duration(self, reference_sim_config):
        config = reference_sim_config(duration_s=0.35)
        blocks = list(iter_event_blocks(config, block_duration_s=0.1))
        assert len(blocks) == 4
        assert sum(block.duration_s for block in blocks) == pytest.approx(0.35)
        joined = EventStream.concatenate(blocks)
        assert joined.is_sorted

    def test_in_memory_budget(self, reference_sim_config, monkeypatch):
        monkeypatch.setattr(Config, 'MAX_EVENTS_IN_MEMORY', 1000)
        with pytest.raises(ConfigValidationError):
            simulate_events(reference_sim_config(duration_s=1.0))


def test_signal_fraction_with_background(reference_sim_config):
    config = reference_sim_config(background_rate=1e4, dark_rate=500.0)
    fractions = signal_fraction(config)
    signal = 0.5 * count_rate(config.rates, config.eta)
    assert fractions['rho_a'] == pytest.approx(signal / (signal + 1.05e4))
    assert fractions['rho'] == pytest.approx(fractions['rho_a'])


def test_expected_event_count(reference_sim_config):
    config = reference_sim_config(duration_s=2.0, background_rate=100.0)
    assert expected_event_count(config) == pytest.approx((count_rate(config.rates, config.eta) + 200.0) * 2.0)
