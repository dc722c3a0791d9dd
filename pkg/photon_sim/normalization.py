# photon_sim/normalization.py
"""
Normalization of coincidence histograms to g2 against a Poissonian source
"""

import math

import numpy as np
from scipy.ndimage import uniform_filter1d

from photon_sim.models import CoincidenceHistogram, G2Curve, FULL_CORRELATION
from utils.errors import PreconditionError
from utils.logging_config import get_logger

logger = get_logger('normalization')

NS_PER_S = 1e9

FIRST_STOP_WARNING_THRESHOLD = 0.01
FIRST_STOP_FLAG = 'first_stop_bias'
FIRST_STOP_CORRECTED_FLAG = 'first_stop_corrected'

# Bins averaged when assigning errors to empty bins
ZERO_COUNT_SMOOTHING_BINS = 5


def _bin_errors(counts: np.ndarray, norm: np.ndarray) -> np.ndarray:
    """
    sqrt(count)/norm, with empty bins using the locally smoothed count
    floored at one raw count
    """
    counts = counts.astype(float)
    smoothed = uniform_filter1d(counts, size=ZERO_COUNT_SMOOTHING_BINS, mode='nearest')
    effective = np.where(counts > 0, counts, np.maximum(smoothed, 1.0))
    return np.sqrt(effective) / norm


def first_stop_correction(hist: CoincidenceHistogram) -> float:
    """Probability that a start sees a stop before the end of the window"""
    stop_rate_per_ns = hist.singles_b / (hist.duration_s * NS_PER_S)
    return -math.expm1(-stop_rate_per_ns * (hist.tau_max_ns - hist.tau_min_ns))


def normalize(hist: CoincidenceHistogram, correct_first_stop: bool = False) -> G2Curve:
    """
    Divide each bin by the coincidences a Poissonian source would give

    full_correlation: singles_A * singles_B * bin_width / duration.
    start_stop: starts * stop_rate * bin_width, valid while a stop inside the
    window is unlikely; the curve is flagged when that probability exceeds 1%.
    With correct_first_stop the start_stop expectation uses the exact
    exponential first-stop distribution instead.

    Raises:
        PreconditionError: zero duration or zero singles on either detector
    """
    if hist.duration_s <= 0.0:
        raise PreconditionError("histogram duration must be > 0")
    if hist.singles_a <= 0 or hist.singles_b <= 0:
        raise PreconditionError(f"singles must be > 0 (A={hist.singles_a}, B={hist.singles_b})")

    duration_ns = hist.duration_s * NS_PER_S
    width = hist.bin_width_ns
    flags = [hist.mode]

    if hist.mode == FULL_CORRELATION:
        norm = np.full(hist.n_bins, hist.singles_a * hist.singles_b * width / duration_ns)
    else:
        stop_rate = hist.singles_b / duration_ns
        correction = first_stop_correction(hist)
        if correct_first_stop:
            left = hist.edges_ns[:-1] - hist.tau_min_ns
            norm = hist.singles_a * np.exp(-stop_rate * left) * -np.expm1(-stop_rate * width)
            flags.append(FIRST_STOP_CORRECTED_FLAG)
        else:
            norm = np.full(hist.n_bins, hist.singles_a * stop_rate * width)
            if correction > FIRST_STOP_WARNING_THRESHOLD:
                flags.append(FIRST_STOP_FLAG)
                logger.warning(f"Start-stop first-stop correction is {correction:.1%} (> 1%); "
                               f"normalize with correct_first_stop=True or shorten the window")

    g2 = hist.counts / norm
    sigma = _bin_errors(hist.counts, norm)
    return G2Curve(hist.centers_ns, g2, sigma, rho=None, bin_width_ns=width, mode=hist.mode, flags=tuple(flags))

