# photon_sim/models.py
"""
Data models for simulated HBT acquisition
Event streams, coincidence histograms and normalized g2 curves
"""

import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from kinetics.models import RateConstants, DetectionEfficiency
from utils.config import Config
from utils.errors import ConfigValidationError, InvalidParameterError, PreconditionError

DETECTOR_A = 0
DETECTOR_B = 1
DETECTOR_NAMES = ('A', 'B')

FULL_CORRELATION = 'full_correlation'
START_STOP = 'start_stop'
CORRELATION_MODES = (FULL_CORRELATION, START_STOP)

SIMULATION_METHODS = ('renewal', 'jump')

MAX_SEED = 2 ** 64


@dataclass(frozen=True)
class SimConfig:
    """Everything that determines a simulated detection stream"""
    rates: RateConstants
    eta: DetectionEfficiency
    duration_s: float
    beamsplit_ratio: float = 0.5
    background_rate: float = 0.0
    dark_rate: float = 0.0
    timestamp_resolution_ns: float = Config.DEFAULT_TIMESTAMP_RESOLUTION_NS
    rng_seed: int = 0
    method: str = 'renewal'
    dead_time_ns: float = 0.0

    def __post_init__(self):
        if not isinstance(self.rates, RateConstants):
            raise ConfigValidationError("must be RateConstants", field='rates')
        if not isinstance(self.eta, DetectionEfficiency):
            try:
                object.__setattr__(self, 'eta', DetectionEfficiency(self.eta))
            except (TypeError, ValueError) as e:
                raise ConfigValidationError(str(e), field='eta') from None

        self._require(self.duration_s > 0.0, 'duration_s', "must be > 0")
        self._require(0.0 < self.beamsplit_ratio < 1.0, 'beamsplit_ratio', "must be in (0, 1)")
        self._require(self.background_rate >= 0.0, 'background_rate', "must be >= 0")
        self._require(self.dark_rate >= 0.0, 'dark_rate', "must be >= 0")
        self._require(self.timestamp_resolution_ns > 0.0, 'timestamp_resolution_ns', "must be > 0")
        self._require(self.dead_time_ns >= 0.0, 'dead_time_ns', "must be >= 0")

        if isinstance(self.rng_seed, bool) or not isinstance(self.rng_seed, (int, np.integer)):
            raise ConfigValidationError("must be an integer", field='rng_seed')
        self._require(0 <= int(self.rng_seed) < MAX_SEED, 'rng_seed', "must be a 64-bit unsigned integer")
        if self.method not in SIMULATION_METHODS:
            raise ConfigValidationError(f"must be one of {SIMULATION_METHODS}", field='method')

    @staticmethod
    def _require(condition: bool, name: str, message: str):
        if not condition:
            raise ConfigValidationError(message, field=name)

    @property
    def noise_rate(self) -> float:
        """Uncorrelated clicks per second on each detector"""
        return self.background_rate + self.dark_rate


@dataclass(frozen=True)
class DetectionEvent:
    """One detector click"""
    t_ns: float
    detector: str


@dataclass
class EventStream:
    """
    Time-ordered detector clicks

    Timestamps are integer ticks of resolution_ns; detectors are coded
    DETECTOR_A / DETECTOR_B. A block of a longer stream is an EventStream
    whose duration covers only that block.
    """
    ticks: np.ndarray
    detectors: np.ndarray
    resolution_ns: float
    duration_s: float

    def __post_init__(self):
        self.ticks = np.asarray(self.ticks, dtype=np.int64)
        self.detectors = np.asarray(self.detectors, dtype=np.uint8)
        if self.ticks.shape != self.detectors.shape or self.ticks.ndim != 1:
            raise InvalidParameterError("ticks and detectors must be 1-d arrays of equal length")
        if self.resolution_ns <= 0.0:
            raise InvalidParameterError("resolution_ns must be > 0")
        if self.duration_s < 0.0:
            raise InvalidParameterError("duration_s must be >= 0")
        if self.detectors.size and self.detectors.max() > DETECTOR_B:
            raise InvalidParameterError("detector codes must be 0 (A) or 1 (B)")

    def __len__(self) -> int:
        return int(self.ticks.size)

    def __iter__(self) -> Iterator[DetectionEvent]:
        for tick, detector in zip(self.ticks, self.detectors):
            yield DetectionEvent(float(tick) * self.resolution_ns, DETECTOR_NAMES[detector])

    @property
    def times_ns(self) -> np.ndarray:
        return self.ticks * self.resolution_ns

    @property
    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.ticks) >= 0))

    def channel(self, detector: int) -> np.ndarray:
        """Ticks recorded on one detector"""
        return self.ticks[self.detectors == detector]

    def singles(self) -> Tuple[int, int]:
        count_b = int(np.count_nonzero(self.detectors))
        return len(self) - count_b, count_b

    def singles_rates(self) -> Tuple[float, float]:
        """Per-detector count rates in s^-1"""
        if self.duration_s <= 0.0:
            raise PreconditionError("stream has zero duration")
        count_a, count_b = self.singles()
        return count_a / self.duration_s, count_b / self.duration_s

    @classmethod
    def empty(cls, resolution_ns: float, duration_s: float) -> 'EventStream':
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.uint8), resolution_ns, duration_s)

    @classmethod
    def concatenate(cls, blocks: Sequence['EventStream']) -> 'EventStream':
        """Join consecutive blocks; durations add"""
        if not blocks:
            raise PreconditionError("no blocks to concatenate")
        resolution = blocks[0].resolution_ns
        if any(block.resolution_ns != resolution for block in blocks):
            raise PreconditionError("blocks have different timestamp resolutions")
        return cls(
            np.concatenate([block.ticks for block in blocks]),
            np.concatenate([block.detectors for block in blocks]),
            resolution,
            sum(block.duration_s for block in blocks),
        )


def check_binning(bin_width_ns: float, tau_min_ns: float, tau_max_ns: float) -> int:
    if not (bin_width_ns > 0.0):
        raise PreconditionError("bin_width must be > 0")
    if not (tau_max_ns > tau_min_ns):
        raise PreconditionError("window must satisfy tau_min < tau_max")
    n_bins = (tau_max_ns - tau_min_ns) / bin_width_ns
    if abs(n_bins - round(n_bins)) > 1e-9 * max(n_bins, 1.0):
        raise PreconditionError(
            f"window ({tau_min_ns}, {tau_max_ns}) ns is not a whole number of {bin_width_ns} ns bins")
    return int(round(n_bins))


@dataclass
class CoincidenceHistogram:
    """Raw delay histogram with the singles needed to normalize it"""
    bin_width_ns: float
    tau_min_ns: float
    tau_max_ns: float
    counts: np.ndarray
    singles_a: int
    singles_b: int
    duration_s: float
    mode: str = FULL_CORRELATION

    def __post_init__(self):
        n_bins = check_binning(self.bin_width_ns, self.tau_min_ns, self.tau_max_ns)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (n_bins,):
            raise InvalidParameterError(f"expected {n_bins} bins, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise InvalidParameterError("histogram counts must be >= 0")
        if self.mode not in CORRELATION_MODES:
            raise InvalidParameterError(f"mode must be one of {CORRELATION_MODES}")
        if self.singles_a < 0 or self.singles_b < 0 or self.duration_s < 0.0:
            raise InvalidParameterError("singles and duration must be >= 0")

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def edges_ns(self) -> np.ndarray:
        return self.tau_min_ns + self.bin_width_ns * np.arange(self.n_bins + 1)

    @property
    def centers_ns(self) -> np.ndarray:
        return self.tau_min_ns + self.bin_width_ns * (np.arange(self.n_bins) + 0.5)

    @property
    def total_coincidences(self) -> int:
        return int(self.counts.sum())

    def same_binning(self, other: 'CoincidenceHistogram') -> bool:
        return (self.mode == other.mode
                and math.isclose(self.bin_width_ns, other.bin_width_ns, rel_tol=1e-12)
                and math.isclose(self.tau_min_ns, other.tau_min_ns, rel_tol=1e-12, abs_tol=1e-12)
                and math.isclose(self.tau_max_ns, other.tau_max_ns, rel_tol=1e-12, abs_tol=1e-12))

    def merge(self, other: 'CoincidenceHistogram') -> 'CoincidenceHistogram':
        """Combine histograms of disjoint stretches of acquisition"""
        if not self.same_binning(other):
            raise PreconditionError("cannot merge histograms with different binning or mode")
        return CoincidenceHistogram(
            bin_width_ns=self.bin_width_ns,
            tau_min_ns=self.tau_min_ns,
            tau_max_ns=self.tau_max_ns,
            counts=self.counts + other.counts,
            singles_a=self.singles_a + other.singles_a,
            singles_b=self.singles_b + other.singles_b,
            duration_s=self.duration_s + other.duration_s,
            mode=self.mode,
        )

    @classmethod
    def merge_all(cls, histograms: Sequence['CoincidenceHistogram']) -> 'CoincidenceHistogram':
        if not histograms:
            raise PreconditionError("no histograms to merge")
        merged = histograms[0]
        for histogram in histograms[1:]:
            merged = merged.merge(histogram)
        return merged


@dataclass(frozen=True)
class G2Curve:
    """
    Normalized g2 estimate on a grid of bin centers

    rho is the signal fraction the curve was background-corrected with,
    None for a raw curve.
    """
    tau_ns: np.ndarray
    g2: np.ndarray
    sigma: np.ndarray
    rho: Optional[float] = None
    bin_width_ns: Optional[float] = None
    mode: str = FULL_CORRELATION
    flags: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        tau = np.asarray(self.tau_ns, dtype=float)
        g2 = np.asarray(self.g2, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if not (tau.ndim == 1 and tau.shape == g2.shape == sigma.shape):
            raise InvalidParameterError("tau, g2 and sigma must be 1-d arrays of equal length")
        if tau.size > 1 and np.any(np.diff(tau) <= 0):
            raise InvalidParameterError("tau grid must be strictly increasing")
        if np.any(~np.isfinite(tau)) or np.any(~np.isfinite(g2)):
            raise InvalidParameterError("tau and g2 must be finite")
        if np.any(~(sigma > 0)):
            raise InvalidParameterError("standard errors must be > 0")
        if self.rho is not None and not (0.0 < self.rho <= 1.0):
            raise InvalidParameterError(f"rho must be in (0, 1], got {self.rho!r}")
        object.__setattr__(self, 'tau_ns', tau)
        object.__setattr__(self, 'g2', g2)
        object.__setattr__(self, 'sigma', sigma)
        object.__setattr__(self, 'flags', tuple(self.flags))

    def __len__(self) -> int:
        return int(self.tau_ns.size)

    @property
    def is_background_corrected(self) -> bool:
        return self.rho is not None

    @property
    def effective_bin_width_ns(self) -> float:
        """Declared bin width, else the grid spacing"""
        if self.bin_width_ns is not None:
            return self.bin_width_ns
        if len(self) > 1:
            return float(np.min(np.diff(self.tau_ns)))
        return 0.0

    def with_values(self, g2: np.ndarray, sigma: np.ndarray, rho: Optional[float] = None,
                    flags: Optional[List[str]] = None) -> 'G2Curve':
        return G2Curve(self.tau_ns, g2, sigma, rho=rho, bin_width_ns=self.bin_width_ns,
                       mode=self.mode, flags=tuple(flags) if flags is not None else self.flags)

    def select(self, mask: np.ndarray) -> 'G2Curve':
        return G2Curve(self.tau_ns[mask], self.g2[mask], self.sigma[mask], rho=self.rho,
                       bin_width_ns=self.bin_width_ns, mode=self.mode, flags=self.flags)
