# photon_sim/correlator.py
"""
Delay histogramming of A/B click streams

full_correlation counts every A-B pair whose delay tB - tA falls in the
window; start_stop emulates a time-to-amplitude converter and counts only
the first B stop after each A start.
"""

import time
from typing import Iterable, Optional, Tuple

import numpy as np

from photon_sim.models import (
    EventStream, CoincidenceHistogram, DETECTOR_A, DETECTOR_B,
    FULL_CORRELATION, CORRELATION_MODES, check_binning,
)
from utils.config import Config
from utils.errors import PreconditionError, UnsortedEventsError
from utils.logging_config import get_logger, KineticsLogger
from utils.thread_manager import run_ordered

logger = get_logger('correlator')

NS_PER_S = 1e9

# Starts processed per vectorized pass, bounds the pair buffer
START_CHUNK = 200_000


def _to_ticks(value_ns: float, resolution_ns: float, name: str) -> int:
    ticks = value_ns / resolution_ns
    if abs(ticks - round(ticks)) > 1e-6:
        raise PreconditionError(f"{name} ({value_ns} ns) must be a whole number of {resolution_ns} ns ticks")
    return int(round(ticks))


class _TickBinning:
    """Histogram window expressed in integer timestamp ticks"""

    def __init__(self, bin_width_ns: float, window: Tuple[float, float], resolution_ns: float, mode: str):
        if mode not in CORRELATION_MODES:
            raise PreconditionError(f"mode must be one of {CORRELATION_MODES}, got {mode!r}")
        tau_min, tau_max = window
        self.n_bins = check_binning(bin_width_ns, tau_min, tau_max)
        self.bin_width_ns = bin_width_ns
        self.tau_min_ns = tau_min
        self.tau_max_ns = tau_max
        self.mode = mode
        self.resolution_ns = resolution_ns
        self.width = _to_ticks(bin_width_ns, resolution_ns, 'bin_width')
        self.lo = _to_ticks(tau_min, resolution_ns, 'tau_min')
        self.hi = self.lo + self.n_bins * self.width

    def histogram(self, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
        """Counts of stop-minus-start delays, starts and stops sorted"""
        counts = np.zeros(self.n_bins, dtype=np.int64)
        if starts.size == 0 or stops.size == 0:
            return counts
        for offset in range(0, starts.size, START_CHUNK):
            chunk = starts[offset:offset + START_CHUNK]
            if self.mode == FULL_CORRELATION:
                delays = self._all_delays(chunk, stops)
            else:
                delays = self._first_stop_delays(chunk, stops)
            if delays.size:
                counts += np.bincount((delays - self.lo) // self.width, minlength=self.n_bins)
        return counts

    def _all_delays(self, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
        first = np.searchsorted(stops, starts + self.lo, side='left')
        last = np.searchsorted(stops, starts + self.hi, side='left')
        per_start = last - first
        total = int(per_start.sum())
        if total == 0:
            return np.empty(0, dtype=np.int64)
        owner = np.repeat(np.arange(starts.size), per_start)
        position = np.arange(total) - np.repeat(np.cumsum(per_start) - per_start, per_start)
        return stops[first[owner] + position] - starts[owner]

    def _first_stop_delays(self, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
        index = np.searchsorted(stops, starts + self.lo, side='left')
        found = index < stops.size
        delays = stops[index[found]] - starts[found]
        return delays[delays < self.hi]

    def make_histogram(self, counts, singles_a, singles_b, duration_s) -> CoincidenceHistogram:
        return CoincidenceHistogram(
            bin_width_ns=self.bin_width_ns,
            tau_min_ns=self.tau_min_ns,
            tau_max_ns=self.tau_max_ns,
            counts=counts,
            singles_a=int(singles_a),
            singles_b=int(singles_b),
            duration_s=duration_s,
            mode=self.mode,
        )


class StreamingCorrelator:
    """
    Incremental histogramming of a block stream

    A start is histogrammed once no later click can fall inside its window;
    only the stops still reachable by pending starts are kept in memory.
    """

    def __init__(self, bin_width_ns: float = None, window: Tuple[float, float] = None,
                 mode: str = FULL_CORRELATION, resolution_ns: Optional[float] = None):
        self.bin_width_ns = bin_width_ns or Config.DEFAULT_BIN_WIDTH_NS
        half = Config.DEFAULT_WINDOW_NS / 2.0
        self.window = tuple(window) if window is not None else (-half, half)
        self.mode = mode
        self._binning = None
        if resolution_ns is not None:
            self._binning = _TickBinning(self.bin_width_ns, self.window, resolution_ns, mode)

        self._pending_starts = np.empty(0, dtype=np.int64)
        self._stops = np.empty(0, dtype=np.int64)
        self._counts = None
        self._singles = [0, 0]
        self._duration_s = 0.0
        self._last_tick = None
        self._events_seen = 0

    def add(self, block: EventStream) -> None:
        """Feed the next block; blocks must follow each other in time"""
        if self._binning is None:
            self._binning = _TickBinning(self.bin_width_ns, self.window, block.resolution_ns, self.mode)
            self._counts = np.zeros(self._binning.n_bins, dtype=np.int64)
        elif self._counts is None:
            self._counts = np.zeros(self._binning.n_bins, dtype=np.int64)
        if block.resolution_ns != self._binning.resolution_ns:
            raise PreconditionError("all blocks must share one timestamp resolution")

        ticks = block.ticks
        if ticks.size:
            if np.any(np.diff(ticks) < 0):
                bad = int(np.argmax(np.diff(ticks) < 0))
                raise UnsortedEventsError(f"events are not time ordered at index {self._events_seen + bad + 1}")
            if self._last_tick is not None and ticks[0] < self._last_tick:
                raise UnsortedEventsError("block starts before the end of the previous block")
            self._last_tick = int(ticks[-1])

        self._events_seen += ticks.size
        self._duration_s += block.duration_s
        starts = block.channel(DETECTOR_A)
        stops = block.channel(DETECTOR_B)
        self._singles[0] += starts.size
        self._singles[1] += stops.size

        self._pending_starts = np.concatenate([self._pending_starts, starts])
        self._stops = np.concatenate([self._stops, stops])
        if self._last_tick is None:
            return

        binning = self._binning
        # Later clicks have ticks >= last_tick, beyond the window of these starts
        ready = self._pending_starts + binning.hi <= self._last_tick
        if np.any(ready):
            self._counts += binning.histogram(self._pending_starts[ready], self._stops)
            self._pending_starts = self._pending_starts[~ready]

        earliest = self._last_tick
        if self._pending_starts.size:
            earliest = min(earliest, int(self._pending_starts[0]))
        keep_from = np.searchsorted(self._stops, earliest + binning.lo, side='left')
        self._stops = self._stops[keep_from:]

    def finalize(self) -> CoincidenceHistogram:
        """Histogram every remaining start and return the result"""
        if self._binning is None:
            raise PreconditionError("no events were added and no resolution was given")
        if self._counts is None:
            self._counts = np.zeros(self._binning.n_bins, dtype=np.int64)
        self._counts += self._binning.histogram(self._pending_starts, self._stops)
        self._pending_starts = np.empty(0, dtype=np.int64)
        return self._binning.make_histogram(self._counts.copy(), self._singles[0], self._singles[1],
                                            self._duration_s)


def correlate(events: EventStream, bin_width_ns: float = None, window: Tuple[float, float] = None,
              mode: str = FULL_CORRELATION) -> CoincidenceHistogram:
    """
    Histogram the A->B delays of a sorted event stream

    Args:
        events: time-ordered clicks
        bin_width_ns: bin width, a whole number of timestamp ticks
        window: (tau_min, tau_max) in ns, a whole number of bins wide
        mode: 'full_correlation' or 'start_stop'

    Raises:
        UnsortedEventsError: events are not in non-decreasing time order
    """
    start_time = time.time()
    correlator = StreamingCorrelator(bin_width_ns, window, mode, resolution_ns=events.resolution_ns)
    correlator.add(events)
    histogram = correlator.finalize()

    if Config.ENABLE_PERFORMANCE_LOGGING:
        KineticsLogger.log_data_processing(f"correlate[{mode}]", len(events), time.time() - start_time, True)
    logger.debug(f"Correlated {len(events)} events into {histogram.n_bins} bins "
                 f"({histogram.total_coincidences} coincidences)")
    return histogram


def correlate_blocks(blocks: Iterable[EventStream], bin_width_ns: float = None,
                     window: Tuple[float, float] = None, mode: str = FULL_CORRELATION) -> CoincidenceHistogram:
    """Histogram a stream delivered as consecutive blocks"""
    correlator = StreamingCorrelator(bin_width_ns, window, mode)
    for block in blocks:
        correlator.add(block)
    return correlator.finalize()


def _slice_histogram(events: EventStream, binning: _TickBinning, bounds: Tuple[int, int],
                     total_ticks: int) -> CoincidenceHistogram:
    """Starts and singles inside [lo, hi) ticks; stops taken from wherever the window reaches"""
    lo, hi = bounds
    starts = events.channel(DETECTOR_A)
    stops = events.channel(DETECTOR_B)
    slice_starts = starts[np.searchsorted(starts, lo):np.searchsorted(starts, hi)]
    reach = stops[np.searchsorted(stops, lo + binning.lo):np.searchsorted(stops, hi + binning.hi)]
    singles_b = int(np.searchsorted(stops, hi) - np.searchsorted(stops, lo))
    duration = events.duration_s * (hi - lo) / total_ticks
    return binning.make_histogram(binning.histogram(slice_starts, reach), slice_starts.size, singles_b, duration)


def correlate_sliced(events: EventStream, bin_width_ns: float = None, window: Tuple[float, float] = None,
                     mode: str = FULL_CORRELATION, n_slices: int = 4,
                     max_workers: Optional[int] = None) -> CoincidenceHistogram:
    """
    Histogram disjoint time slices concurrently and merge them

    Gives the same counts and singles as correlate on the whole stream.
    """
    if n_slices < 1:
        raise PreconditionError("n_slices must be >= 1")
    if not events.is_sorted:
        raise UnsortedEventsError("events are not time ordered")

    binning = _TickBinning(bin_width_ns or Config.DEFAULT_BIN_WIDTH_NS,
                           window if window is not None else (-Config.DEFAULT_WINDOW_NS / 2.0,
                                                              Config.DEFAULT_WINDOW_NS / 2.0),
                           events.resolution_ns, mode)
    duration_ticks = int(np.ceil(events.duration_s * NS_PER_S / events.resolution_ns))
    last_tick = int(events.ticks[-1]) + 1 if len(events) else 0
    total_ticks = max(duration_ticks, last_tick, 1)
    edges = np.linspace(0, total_ticks, n_slices + 1).round().astype(np.int64)
    edges[0] = min(0, int(events.ticks[0]) if len(events) else 0)

    bounds = list(zip(edges[:-1].tolist(), edges[1:].tolist()))
    span = int(edges[-1] - edges[0])
    histograms = run_ordered(lambda b: _slice_histogram(events, binning, b, span), bounds,
                             max_workers=max_workers, prefix='correlate-slice')
    return CoincidenceHistogram.merge_all(histograms)
