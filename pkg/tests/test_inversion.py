# tests/test_inversion.py

import numpy as np
import pytest

from kinetics.inversion import rates_from_derived, rates_from_observables, observable_candidates
from kinetics.models import DerivedParams, RateConstants
from kinetics.rate_equations import count_rate, derived_from_rates, emission_rate
from utils.errors import AmbiguousSolutionError, InvalidParameterError, NoSolutionError

ETA = 3e-3


def derived_vector(derived: DerivedParams) -> np.ndarray:
    return np.array([derived.g_e, derived.k_tm, derived.k_1m, derived.sigma2_inf])


def log_uniform_rates(rng, count, low, high):
    values = np.exp(rng.uniform(np.log(low), np.log(high), size=(count, 4)))
    return [RateConstants.from_array(row) for row in values]


class TestRatesFromDerived:
    def test_reference_round_trip(self, reference_rates):
        recovered = rates_from_derived(derived_from_rates(reference_rates))
        np.testing.assert_allclose(recovered.as_array(), reference_rates.as_array(), rtol=1e-9)

    def test_random_round_trip(self, rng):
        for rates in log_uniform_rates(rng, 1000, 1e-2, 1.0):
            recovered = rates_from_derived(derived_from_rates(rates))
            np.testing.assert_allclose(recovered.as_array(), rates.as_array(), rtol=1e-9)

    def test_reproduces_observables_over_wide_range(self, rng):
        for rates in log_uniform_rates(rng, 1000, 1e-4, 1.0):
            derived = derived_from_rates(rates)
            try:
                recovered = rates_from_derived(derived)
            except AmbiguousSolutionError:
                continue
            np.testing.assert_allclose(derived_vector(derived_from_rates(recovered)), derived_vector(derived),
                                       rtol=1e-9, atol=1e-14)

    def test_equal_pump_and_trap_exit_is_ambiguous(self):
        rates = RateConstants(k12=0.01, k21=0.0862, k23=0.01, k32=0.01)
        with pytest.raises(AmbiguousSolutionError) as excinfo:
            rates_from_derived(derived_from_rates(rates))
        assert excinfo.value.candidates
        for candidate in excinfo.value.candidates:
            assert candidate.k21 + candidate.k23 == pytest.approx(rates.k21 + rates.k23, rel=1e-9)

    def test_unrealizable_observables(self):
        with pytest.raises(NoSolutionError):
            rates_from_derived(DerivedParams(g_e=-5.0, k_tm=0.15, k_1m=0.1, sigma2_inf=0.2))


class TestRatesFromObservables:
    def test_two_branches_for_reference(self, reference_rates):
        derived = derived_from_rates(reference_rates)
        brightness = count_rate(reference_rates, ETA)
        candidates = observable_candidates(derived.g_e, derived.k_tm, derived.k_1m, brightness, ETA)
        assert len(candidates) == 2

        low, high = candidates
        np.testing.assert_allclose(low.as_array(), reference_rates.as_array(), rtol=1e-8)
        assert high.k12 == pytest.approx(0.0967, rel=1e-2)
        assert high.k21 == pytest.approx(0.0446, rel=1e-2)
        assert high.k32 == pytest.approx(reference_rates.k32, rel=1e-9)

    def test_every_candidate_reproduces_inputs(self, reference_rates):
        derived = derived_from_rates(reference_rates)
        brightness = count_rate(reference_rates, ETA)
        for candidate in observable_candidates(derived.g_e, derived.k_tm, derived.k_1m, brightness, ETA):
            shape = derived_from_rates(candidate)
            assert shape.g_e == pytest.approx(derived.g_e, rel=1e-9)
            assert shape.k_tm == pytest.approx(derived.k_tm, rel=1e-9)
            assert shape.k_1m == pytest.approx(derived.k_1m, rel=1e-9)
            assert count_rate(candidate, ETA) == pytest.approx(brightness, rel=1e-9)

    def test_hint_selects_branch(self, reference_rates):
        derived = derived_from_rates(reference_rates)
        brightness = count_rate(reference_rates, ETA)
        rates = rates_from_observables(derived.g_e, derived.k_tm, derived.k_1m, brightness, ETA,
                                       k21_hint=0.0862)
        np.testing.assert_allclose(rates.as_array(), reference_rates.as_array(), rtol=1e-8)

        other = rates_from_observables(derived.g_e, derived.k_tm, derived.k_1m, brightness, ETA,
                                       k21_hint=0.04)
        assert other.k21 == pytest.approx(0.0446, rel=1e-2)

    def test_without_hint_is_ambiguous(self, reference_rates):
        derived = derived_from_rates(reference_rates)
        brightness = count_rate(reference_rates, ETA)
        with pytest.raises(AmbiguousSolutionError) as excinfo:
            rates_from_observables(derived.g_e, derived.k_tm, derived.k_1m, brightness, ETA)
        assert len(excinfo.value.candidates) == 2

    def test_brightness_beyond_emitter_capacity(self, reference_rates):
        derived = derived_from_rates(reference_rates)
        # More counts than the shape observables allow at any sigma2_inf
        impossible = ETA * derived.k_tm * 1e9 * 10.0
        with pytest.raises(NoSolutionError):
            rates_from_observables(derived.g_e, derived.k_tm, derived.k_1m, impossible, ETA)

    def test_brightness_must_be_positive(self, reference_rates):
        derived = derived_from_rates(reference_rates)
        with pytest.raises(InvalidParameterError):
            observable_candidates(derived.g_e, derived.k_tm, derived.k_1m, 0.0, ETA)

    def test_emission_rate_matches_count_rate(self, reference_rates):
        assert count_rate(reference_rates, ETA) == pytest.approx(ETA * emission_rate(reference_rates) * 1e9)
