# estimation/g2_fit.py
"""
Weighted nonlinear least-squares fit of g2(tau)

Model: A * g2(|tau - tau0|) with
g2(t) = 1 - (1+g_e)/2 exp(-fast t) - (1-g_e)/2 exp(-slow t),
fast = (k_tm + k_1m)/2, slow = (k_tm - k_1m)/2.
The fit runs in (g_e, fast, slow, A, tau0); covariance is mapped back to
(g_e, k_tm, k_1m).
"""

import math
import time
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from estimation.models import FitResult
from kinetics.rate_equations import g2_model
from photon_sim.models import G2Curve
from utils.config import Config
from utils.errors import PreconditionError, UnidentifiableError, NonConvergenceError
from utils.logging_config import get_logger, KineticsLogger

logger = get_logger('g2_fit')

MIN_FIT_BINS = 10
FLAT_CURVE_CHI2 = 2.0

AMPLITUDE_PRIOR = (1.0, 0.05)
OFFSET_PRIOR_NS = (0.0, 1.0)

X_TOLERANCE = 1e-10
F_TOLERANCE = 1e-12

# Internal parameter order
G_E, FAST, SLOW, AMPLITUDE, OFFSET = range(5)


def _model_and_jacobian(params: np.ndarray, tau: np.ndarray):
    """Model values and d(model)/d(params) for the full parameter vector"""
    g_e, fast, slow, amplitude, tau0 = params
    shifted = tau - tau0
    t = np.abs(shifted)
    fast_exp = np.exp(-fast * t)
    slow_exp = np.exp(-slow * t)
    shape = g2_model(t, g_e, fast, slow)

    jacobian = np.empty((tau.size, 5))
    jacobian[:, G_E] = amplitude * 0.5 * (fast_exp - slow_exp)
    jacobian[:, FAST] = amplitude * 0.5 * (1.0 + g_e) * t * fast_exp
    jacobian[:, SLOW] = amplitude * 0.5 * (1.0 - g_e) * t * slow_exp
    jacobian[:, AMPLITUDE] = shape
    slope = 0.5 * (1.0 + g_e) * fast * fast_exp + 0.5 * (1.0 - g_e) * slow * slow_exp
    jacobian[:, OFFSET] = -amplitude * np.sign(shifted) * slope
    return amplitude * shape, jacobian


def _flat_chi2(curve: G2Curve) -> float:
    return float(np.mean(((curve.g2 - 1.0) / curve.sigma) ** 2))


def _first_crossing(x: np.ndarray, y: np.ndarray, level: float, rising: bool) -> Optional[float]:
    hit = np.nonzero(y >= level if rising else y <= level)[0]
    return float(x[hit[0]]) if hit.size else None


def default_guess(curve: G2Curve) -> np.ndarray:
    """
    Starting (g_e, fast, slow) read off the curve

    Shoulder height gives g_e, the dip width the fast rate and the decay of
    the shoulder the slow rate.
    """
    order = np.argsort(np.abs(curve.tau_ns))
    t = np.abs(curve.tau_ns)[order]
    y = curve.g2[order]
    smooth = np.convolve(y, np.ones(5) / 5.0, mode='same') if y.size >= 5 else y

    peak_index = int(np.argmax(smooth))
    peak = max(float(smooth[peak_index]), 1.0)
    g_e = max(2.0 * peak - 1.0, 1.0)

    t_max = float(t[-1]) if t[-1] > 0 else 1.0
    half = _first_crossing(t, smooth, 0.5 * peak, rising=True)
    fast = math.log(2.0) / half if half and half > 0 else 10.0 / t_max

    excess = smooth - 1.0
    slow = None
    if peak > 1.05:
        tail_t, tail = t[peak_index:], excess[peak_index:]
        decayed = _first_crossing(tail_t, tail, excess[peak_index] / math.e, rising=False)
        if decayed and decayed > 0:
            slow = 1.0 / decayed
    if slow is None:
        slow = 3.0 / t_max
    slow = min(slow, 0.5 * fast)
    return np.array([g_e, fast, slow])


def _fit_mask(curve: G2Curve) -> np.ndarray:
    """Bins used by the fit: |tau| at least half a bin away from zero"""
    half_width = 0.5 * curve.effective_bin_width_ns
    return np.abs(curve.tau_ns) >= half_width * (1.0 - 1e-12)


def fit_g2(curve: G2Curve, initial_guess: Optional[Sequence[float]] = None,
           fit_amplitude: bool = True, fit_offset: bool = True,
           max_iterations: Optional[int] = None) -> FitResult:
    """
    Fit (g_e, k_tm, k_1m) to a g2 curve with weights 1/sigma^2

    Args:
        curve: normalized (and usually background-corrected) g2 estimate
        initial_guess: optional (g_e, k_tm, k_1m); read off the curve otherwise
        fit_amplitude: float an overall normalization with prior 1 +- 0.05
        fit_offset: float a delay offset tau0 with prior 0 +- 1 ns
        max_iterations: cap on function evaluations

    Returns:
        FitResult; converged is False when the iteration cap was hit

    Raises:
        PreconditionError: fewer than 10 usable bins
        UnidentifiableError: the curve is statistically flat at 1
    """
    start_time = time.time()
    mask = _fit_mask(curve)
    data = curve.select(mask)
    if len(data) < MIN_FIT_BINS:
        raise PreconditionError(f"fit needs at least {MIN_FIT_BINS} bins, got {len(data)}")

    flat = _flat_chi2(data)
    if flat < FLAT_CURVE_CHI2:
        raise UnidentifiableError(
            f"curve is consistent with g2 = 1 (chi2/N = {flat:.2f}); no kinetics to fit")

    if initial_guess is not None:
        g_e0, k_tm0, k_1m0 = (float(v) for v in initial_guess)
        shape0 = np.array([g_e0, 0.5 * (k_tm0 + k_1m0), 0.5 * (k_tm0 - k_1m0)])
    else:
        shape0 = default_guess(data)
    full0 = np.array([shape0[0], max(shape0[1], 1e-9), max(shape0[2], 1e-9), 1.0, 0.0])

    free = [G_E, FAST, SLOW]
    if fit_amplitude:
        free.append(AMPLITUDE)
    if fit_offset:
        free.append(OFFSET)
    free = np.array(free)

    tau, y, sigma = data.tau_ns, data.g2, data.sigma
    priors = []
    if fit_amplitude:
        priors.append((int(np.nonzero(free == AMPLITUDE)[0][0]), AMPLITUDE_PRIOR))
    if fit_offset:
        priors.append((int(np.nonzero(free == OFFSET)[0][0]), OFFSET_PRIOR_NS))

    def expand(x):
        params = full0.copy()
        params[free] = x
        return params

    def residuals(x):
        model, _ = _model_and_jacobian(expand(x), tau)
        extra = [(x[i] - center) / width for i, (center, width) in priors]
        return np.concatenate([(model - y) / sigma, extra])

    def jacobian(x):
        _, jac = _model_and_jacobian(expand(x), tau)
        jac = jac[:, free] / sigma[:, None]
        rows = []
        for i, (_, width) in priors:
            row = np.zeros(free.size)
            row[i] = 1.0 / width
            rows.append(row)
        return np.vstack([jac] + rows) if rows else jac

    lower = np.array([-np.inf, 0.0, 0.0, 0.0, -np.inf])[free]
    upper = np.full(free.size, np.inf)
    x0 = full0[free]

    result = least_squares(
        residuals, x0, jac=jacobian, bounds=(lower, upper), method='trf',
        xtol=X_TOLERANCE, ftol=F_TOLERANCE, gtol=None, x_scale='jac',
        max_nfev=max_iterations or Config.FIT_MAX_ITERATIONS,
    )

    params = expand(result.x)
    full_cov = _covariance(result.jac)

    g_e, fast, slow = params[G_E], params[FAST], params[SLOW]
    # The model is invariant under (g_e, fast, slow) -> (-g_e, slow, fast)
    swap = np.diag([1.0, 1.0, 1.0])
    if slow > fast:
        g_e, fast, slow = -g_e, slow, fast
        swap = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])

    shape_cov = full_cov[:3, :3]
    to_observables = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, -1.0]]) @ swap
    covariance = to_observables @ shape_cov @ to_observables.T

    n_data = tau.size
    chi2 = float(np.sum(result.fun[:n_data] ** 2))
    dof = max(n_data - free.size, 1)
    converged = bool(result.status > 0)
    if not converged:
        logger.warning(f"g2 fit stopped after {result.nfev} evaluations: {result.message}")

    fit = FitResult(
        g_e=float(g_e),
        k_tm=float(fast + slow),
        k_1m=float(fast - slow),
        covariance=covariance,
        reduced_chi2=chi2 / dof,
        iterations=int(result.nfev),
        converged=converged,
        amplitude=float(params[AMPLITUDE]),
        tau0_ns=float(params[OFFSET]),
        n_points=int(n_data),
        message=str(result.message),
    )

    if Config.ENABLE_PERFORMANCE_LOGGING:
        KineticsLogger.log_data_processing("fit_g2", n_data, time.time() - start_time, converged)
    logger.debug(f"g2 fit: g_e={fit.g_e:.4f}, k_tm={fit.k_tm:.5f}, k_1m={fit.k_1m:.5f}, "
                 f"chi2/dof={fit.reduced_chi2:.3f}, nfev={fit.iterations}")
    return fit


def _covariance(jacobian: np.ndarray) -> np.ndarray:
    """(J^T J)^-1 via SVD in the order of the free parameters"""
    _, singular, vt = np.linalg.svd(jacobian, full_matrices=False)
    threshold = np.finfo(float).eps * max(jacobian.shape) * singular[0]
    inverse = np.where(singular > threshold, 1.0 / singular ** 2, 0.0)
    return (vt.T * inverse) @ vt


def require_converged(fit: FitResult, stage: str = 'fit_g2') -> FitResult:
    """Raise NonConvergenceError for a fit that hit its iteration cap"""
    if not fit.converged:
        raise NonConvergenceError(f"{stage} did not converge: {fit.message}", diagnostics=fit.to_dict())
    return fit


def fitted_curve(fit: FitResult, tau_ns: np.ndarray) -> np.ndarray:
    """Fitted model evaluated on a tau grid, nuisance parameters included"""
    t = np.abs(np.asarray(tau_ns, dtype=float) - fit.tau0_ns)
    return fit.amplitude * np.asarray(g2_model(t, fit.g_e, fit.fast_rate, fit.slow_rate))
