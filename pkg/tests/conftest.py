# tests/conftest.py
"""
Shared fixtures for the g2kinetics test suite
Monte-Carlo acceptance runs are marked slow and only run with --runslow
"""

import numpy as np
import pytest

from config.presets import REFERENCE_ETA, get_power_model
from estimation.models import FitResult, PowerPoint
from kinetics.models import RateConstants
from kinetics.power import rates_at_power
from kinetics.rate_equations import count_rate, derived_from_rates
from photon_sim.models import SimConfig


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow Monte-Carlo tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def reference_rates():
    return RateConstants(k12=0.05, k21=0.0862, k23=0.01, k32=0.005)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def preset_model():
    return get_power_model('nv_532nm')


@pytest.fixture
def reference_sim_config(reference_rates):
    def build(duration_s=1.0, seed=2024, **overrides):
        fields = {'eta': REFERENCE_ETA, **overrides}
        return SimConfig(rates=reference_rates, duration_s=duration_s, rng_seed=seed, **fields)
    return build


def exact_point(rates: RateConstants, power_mW: float, eta: float = REFERENCE_ETA,
                brightness_scale: float = 1.0) -> PowerPoint:
    """Power point carrying the exact observables of the given rates"""
    derived = derived_from_rates(rates)
    fit = FitResult(
        g_e=derived.g_e,
        k_tm=derived.k_tm,
        k_1m=derived.k_1m,
        covariance=np.diag([1e-4, 1e-8, 1e-8]),
        reduced_chi2=1.0,
        iterations=1,
        converged=True,
        n_points=100,
    )
    brightness = count_rate(rates, eta) * brightness_scale
    return PowerPoint(power_mW=power_mW, curve=None, brightness=brightness, fit=fit,
                      brightness_std=np.sqrt(brightness))


@pytest.fixture
def ladder_points(preset_model):
    """Exact observables along the reference power ladder"""
    def build(eta=REFERENCE_ETA, brightness_scale=1.0, powers=(0.3, 1.0, 3.0, 8.0, 16.0, 31.0)):
        return [exact_point(rates_at_power(preset_model, p), p, eta, brightness_scale) for p in powers]
    return build
