# tests/test_g2_fit.py

import numpy as np
import pytest

from estimation.comparison import compare_models, confidence_ellipsoid_contains, truth_comparison
from estimation.g2_fit import fit_g2, fitted_curve, require_converged
from estimation.models import FitResult
from kinetics.rate_equations import derived_from_rates, g2_analytic
from photon_sim.models import G2Curve
from utils.errors import InvalidParameterError, NonConvergenceError, PreconditionError, UnidentifiableError


@pytest.fixture
def noiseless_curve(reference_rates):
    tau = np.arange(-499.5, 500.0, 1.0)
    return G2Curve(tau, g2_analytic(reference_rates, np.abs(tau)), np.full(tau.size, 1e-3), bin_width_ns=1.0)


def truth_vector(rates):
    derived = derived_from_rates(rates)
    return np.array([derived.g_e, derived.k_tm, derived.k_1m])


class TestFitG2:
    def test_recovers_noiseless_parameters(self, noiseless_curve, reference_rates):
        fit = fit_g2(noiseless_curve)
        assert fit.converged
        np.testing.assert_allclose(fit.parameters, truth_vector(reference_rates), rtol=1e-6)
        assert fit.amplitude == pytest.approx(1.0, abs=1e-6)
        assert fit.tau0_ns == pytest.approx(0.0, abs=1e-5)

    def test_recovers_from_distant_guess(self, noiseless_curve, reference_rates):
        truth = truth_vector(reference_rates)
        fit = fit_g2(noiseless_curve, initial_guess=(truth[0] * 1.5, truth[1] * 3.0, truth[2] * 2.9),
                     fit_amplitude=False, fit_offset=False)
        np.testing.assert_allclose(fit.parameters, truth, rtol=1e-6)

    def test_reference_observables(self, noiseless_curve):
        fit = fit_g2(noiseless_curve)
        assert fit.g_e == pytest.approx(2.385, rel=1e-3)
        assert fit.k_tm == pytest.approx(0.1512, rel=1e-6)
        assert fit.k_1m == pytest.approx(0.134675, rel=1e-5)
        assert fit.slow_rate == pytest.approx(0.00826, rel=1e-3)

    def test_covariance_shape_and_errors(self, noiseless_curve):
        fit = fit_g2(noiseless_curve)
        assert fit.covariance.shape == (3, 3)
        np.testing.assert_allclose(fit.covariance, fit.covariance.T)
        assert np.all(fit.std_errors > 0.0)

    def test_flat_curve_is_unidentifiable(self):
        tau = np.arange(-49.5, 50.0, 1.0)
        sigma = np.full(tau.size, 0.05)
        g2 = 1.0 + 0.5 * sigma * np.sin(tau)
        with pytest.raises(UnidentifiableError):
            fit_g2(G2Curve(tau, g2, sigma, bin_width_ns=1.0))

    def test_too_few_bins(self, reference_rates):
        tau = np.arange(0.5, 8.0, 1.0)
        curve = G2Curve(tau, g2_analytic(reference_rates, tau), np.full(tau.size, 1e-3), bin_width_ns=1.0)
        with pytest.raises(PreconditionError):
            fit_g2(curve)

    def test_iteration_cap_reported(self, noiseless_curve):
        fit = fit_g2(noiseless_curve, max_iterations=2)
        assert not fit.converged
        with pytest.raises(NonConvergenceError) as excinfo:
            require_converged(fit)
        assert excinfo.value.diagnostics['iterations'] == fit.iterations

    def test_fitted_curve_reproduces_model(self, noiseless_curve, reference_rates):
        fit = fit_g2(noiseless_curve)
        np.testing.assert_allclose(fitted_curve(fit, noiseless_curve.tau_ns), noiseless_curve.g2, atol=1e-6)


class TestFitResult:
    def test_converged_fit_orders_rates(self):
        with pytest.raises(InvalidParameterError):
            FitResult(g_e=1.0, k_tm=0.1, k_1m=0.2, covariance=np.eye(3), reduced_chi2=1.0,
                      iterations=5, converged=True)

    def test_dict_round_trip(self, noiseless_curve):
        fit = fit_g2(noiseless_curve)
        again = FitResult.from_dict(fit.to_dict())
        np.testing.assert_allclose(again.parameters, fit.parameters)
        np.testing.assert_allclose(again.covariance, fit.covariance)


class TestComparison:
    def test_overlay_columns(self, noiseless_curve, reference_rates):
        fit = fit_g2(noiseless_curve)
        table = compare_models(noiseless_curve, fit, rates_power_model=reference_rates)
        assert list(table.columns) == ['tau_ns', 'g2', 'sigma', 'g2_fit', 'g2_power_model', 'g2_constant_trap']
        np.testing.assert_allclose(table['g2_power_model'], noiseless_curve.g2, rtol=1e-12)
        assert table['g2_constant_trap'].isna().all()

    def test_confidence_ellipsoid(self, noiseless_curve):
        fit = fit_g2(noiseless_curve)
        assert confidence_ellipsoid_contains(fit, fit.parameters)
        assert not confidence_ellipsoid_contains(fit, fit.parameters * 1.5)

    def test_truth_comparison(self):
        table = truth_comparison({'k21': 0.1}, {'k21': 0.11})
        assert table.loc[0, 'relative_error'] == pytest.approx(0.1)
