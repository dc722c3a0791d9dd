# estimation/comparison.py
"""
Model overlays and confidence checks for fitted g2 curves
"""

from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import chi2

from estimation.g2_fit import fitted_curve
from estimation.models import FitResult
from kinetics.models import RateConstants
from kinetics.rate_equations import g2_analytic
from photon_sim.models import G2Curve


def _model_column(rates: Optional[RateConstants], tau: np.ndarray) -> np.ndarray:
    if rates is None:
        return np.full(tau.size, np.nan)
    return np.asarray(g2_analytic(rates, np.abs(tau)))


def constant_trap_rates(rates: RateConstants, k23: float, k32: float) -> RateConstants:
    """Same excitation and emission with power-independent shelving rates"""
    return RateConstants(k12=rates.k12, k21=rates.k21, k23=k23, k32=k32)


def compare_models(curve: G2Curve, fit: Optional[FitResult] = None,
                   rates_power_model: Optional[RateConstants] = None,
                   rates_constant_trap: Optional[RateConstants] = None) -> pd.DataFrame:
    """
    Plot-ready table of the measured curve with model overlays

    Columns: tau_ns, g2, sigma, g2_fit, g2_power_model, g2_constant_trap.
    Missing models give NaN columns.
    """
    tau = curve.tau_ns
    table = pd.DataFrame({'tau_ns': tau, 'g2': curve.g2, 'sigma': curve.sigma})
    table['g2_fit'] = fitted_curve(fit, tau) if fit is not None else np.nan
    table['g2_power_model'] = _model_column(rates_power_model, tau)
    table['g2_constant_trap'] = _model_column(rates_constant_trap, tau)
    return table


def confidence_ellipsoid_contains(fit: FitResult, truth: Sequence[float], level: float = 0.95) -> bool:
    """True if (g_e, k_tm, k_1m) truth lies inside the fit's confidence ellipsoid"""
    delta = np.asarray(truth, dtype=float) - fit.parameters
    distance = float(delta @ np.linalg.pinv(fit.covariance) @ delta)
    return distance <= chi2.ppf(level, df=3)


def truth_comparison(truth: Dict[str, float], estimate: Dict[str, float]) -> pd.DataFrame:
    """Ground truth next to recovered values with relative errors"""
    rows = []
    for name, true_value in truth.items():
        value = estimate.get(name, np.nan)
        relative = (value - true_value) / true_value if true_value else np.nan
        rows.append({'parameter': name, 'truth': true_value, 'estimate': value, 'relative_error': relative})
    return pd.DataFrame(rows, columns=['parameter', 'truth', 'estimate', 'relative_error'])
