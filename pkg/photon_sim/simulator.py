# photon_sim/simulator.py
"""
Stochastic HBT acquisition of a single three-level emitter

Every emission resets the emitter to level 1, so detected photons form a
renewal process. The default sampler draws detection intervals exactly from
the absorption time of the eta-thinned chain; the jump sampler walks the
chain transition by transition.
"""

import math
import time
from typing import Dict, Iterator, Optional

import numpy as np

from kinetics.rate_equations import count_rate, emission_rate
from photon_sim.models import SimConfig, EventStream, DETECTOR_A, DETECTOR_B
from utils.config import Config
from utils.errors import ConfigValidationError
from utils.logging_config import get_logger, KineticsLogger

logger = get_logger('simulator')

NS_PER_S = 1e9

# Condition number above which the eigen-decomposition of the thinned chain is not trusted
MAX_EIGENVECTOR_CONDITION = 1e8
NEWTON_MAX_ITERATIONS = 100
NEWTON_RELATIVE_TOLERANCE = 1e-13


def _thinned_subgenerator(config: SimConfig) -> np.ndarray:
    """
    Transient part of the chain in which a detected emission is absorbing

    Row convention: T[i, j] is the rate from level i+1 to level j+1.
    Undetected emissions return to level 1, detected ones leave the chain
    at rate k21 * eta.
    """
    k12, k21, k23, k32 = (config.rates.k12, config.rates.k21, config.rates.k23, config.rates.k32)
    eta = config.eta.eta
    return np.array([
        [-k12, k12, 0.0],
        [k21 * (1.0 - eta), -(k21 + k23), k23],
        [0.0, k32, -k32],
    ])


class RenewalIntervalSampler:
    """
    Exact sampler of the time between consecutive detections

    The survival function of the interval is a sum of exponentials
    S(t) = sum_i c_i exp(lambda_i t); intervals are drawn by solving
    S(t) = U with a bracketed Newton iteration, vectorized over draws.
    """

    def __init__(self, config: SimConfig):
        generator = _thinned_subgenerator(config)
        # A trap that is never entered does not enter the interval law
        if config.rates.k23 == 0.0:
            generator = generator[:2, :2]

        eigenvalues, vectors = np.linalg.eig(generator)
        condition = np.linalg.cond(vectors)
        if not np.isfinite(condition) or condition > MAX_EIGENVECTOR_CONDITION:
            raise np.linalg.LinAlgError(f"thinned generator is not diagonalizable (cond {condition:.2e})")

        start = np.zeros(generator.shape[0])
        start[0] = 1.0
        right = np.linalg.solve(vectors, np.ones(generator.shape[0]))
        coefficients = (start @ vectors) * right

        self.rates = np.real(eigenvalues)
        self.coefficients = np.real(coefficients)
        if np.any(self.rates >= 0.0):
            raise np.linalg.LinAlgError("thinned generator has a non-decaying mode")

        self.slowest = float(np.max(self.rates))
        self.envelope = float(np.sum(np.abs(self.coefficients)))
        self.mean_interval = float(np.linalg.solve(-generator, np.ones(generator.shape[0]))[0])

    def survival(self, t: np.ndarray) -> np.ndarray:
        return np.exp(np.multiply.outer(t, self.rates)) @ self.coefficients

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw size independent detection intervals in ns"""
        uniform = rng.random(size)
        uniform = np.maximum(uniform, np.finfo(float).tiny)
        log_target = np.log(uniform)

        lo = np.zeros(size)
        hi = np.log(self.envelope / uniform) / -self.slowest
        t = np.minimum(-self.mean_interval * log_target, hi)

        for _ in range(NEWTON_MAX_ITERATIONS):
            exponentials = np.exp(np.multiply.outer(t, self.rates))
            survival = np.maximum(exponentials @ self.coefficients, np.finfo(float).tiny)
            slope = (exponentials @ (self.coefficients * self.rates)) / survival
            residual = np.log(survival) - log_target

            # Survival above target means the root lies later
            above = residual > 0.0
            lo = np.where(above, t, lo)
            hi = np.where(above, hi, t)

            with np.errstate(divide='ignore', invalid='ignore'):
                step = t - residual / slope
            outside = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            step = np.where(outside, 0.5 * (lo + hi), step)

            done = np.abs(step - t) <= NEWTON_RELATIVE_TOLERANCE * np.maximum(step, 1.0)
            t = step
            if np.all(done):
                break
        return t


class _JumpSampler:
    """Transition-by-transition walk of the chain; keeps its state across blocks"""

    def __init__(self, config: SimConfig):
        rates = config.rates
        self.eta = config.eta.eta
        self.state = 0
        self.exits = (
            (rates.k12,),
            (rates.k21, rates.k23),
            (rates.k32,),
        )
        self.totals = tuple(sum(row) for row in self.exits)

    def detections(self, rng: np.random.Generator, t_start: float, t_end: float) -> np.ndarray:
        """Detected emission times in [t_start, t_end) ns"""
        times = []
        t = t_start
        while True:
            total = self.totals[self.state]
            if total <= 0.0:
                break
            t += rng.exponential(1.0 / total)
            # Holding times are memoryless, so stopping at the block edge is exact
            if t >= t_end:
                break
            if self.state == 0:
                self.state = 1
            elif self.state == 1:
                k21, k23 = self.exits[1]
                if rng.random() * total < k21:
                    self.state = 0
                    if rng.random() < self.eta:
                        times.append(t)
                else:
                    self.state = 2
            else:
                self.state = 1
        return np.asarray(times, dtype=float)


class _RenewalStream:
    """Detection times from the renewal sampler, carried across blocks"""

    def __init__(self, sampler: RenewalIntervalSampler, rng: np.random.Generator):
        self.sampler = sampler
        self.rng = rng
        self.next_time = float(sampler.sample(rng, 1)[0])

    def detections(self, t_start: float, t_end: float) -> np.ndarray:
        parts = []
        while self.next_time < t_end:
            expected = (t_end - self.next_time) / self.sampler.mean_interval
            size = int(1.1 * expected + 5.0 * math.sqrt(expected + 1.0)) + 16
            arrivals = self.next_time + np.concatenate(([0.0], np.cumsum(self.sampler.sample(self.rng, size))))
            times = arrivals[:-1]
            inside = times < t_end
            parts.append(times[inside])
            self.next_time = float(times[~inside][0]) if not inside.all() else float(arrivals[-1])
        if not parts:
            return np.empty(0)
        return np.concatenate(parts)


def _apply_dead_time(times: np.ndarray, dead_time: float, last_kept: float) -> tuple:
    """Drop clicks within dead_time of the previous recorded click on the same detector"""
    if dead_time <= 0.0 or times.size == 0:
        return times, last_kept
    kept = []
    index = int(np.searchsorted(times, last_kept + dead_time, side='left'))
    while index < times.size:
        kept.append(index)
        index = int(np.searchsorted(times, times[index] + dead_time, side='left'))
    if not kept:
        return times[:0], last_kept
    return times[kept], float(times[kept[-1]])


def expected_event_count(config: SimConfig) -> float:
    """Mean number of recorded clicks over the whole run"""
    signal = count_rate(config.rates, config.eta) if config.rates.k12 > 0.0 else 0.0
    return (signal + 2.0 * config.noise_rate) * config.duration_s


def signal_fraction(config: SimConfig) -> Dict[str, float]:
    """
    Expected signal fraction S/(S+B) on each detector

    The cross-correlation of A and B is diluted by rho_A * rho_B, so the
    effective rho for background correction is their geometric mean.
    """
    signal = config.eta.eta * emission_rate(config.rates) * NS_PER_S if config.rates.k12 > 0.0 else 0.0
    signal_a = config.beamsplit_ratio * signal
    signal_b = (1.0 - config.beamsplit_ratio) * signal

    def fraction(s):
        total = s + config.noise_rate
        return s / total if total > 0.0 else 0.0

    rho_a, rho_b = fraction(signal_a), fraction(signal_b)
    return {'rho_a': rho_a, 'rho_b': rho_b, 'rho': math.sqrt(rho_a * rho_b)}


class EventSimulator:
    """
    Seeded producer of time-ordered detection blocks

    Emitter, beamsplitter and noise draw from independent streams spawned
    from one SeedSequence, so equal configurations give equal streams.
    """

    def __init__(self, config: SimConfig, block_duration_s: Optional[float] = None):
        self.config = config
        self.block_duration_s = block_duration_s or Config.SIM_BLOCK_DURATION_S
        if self.block_duration_s <= 0.0:
            raise ConfigValidationError("must be > 0", field='block_duration_s')

        emitter_seq, route_seq, noise_seq = np.random.SeedSequence(int(config.rng_seed)).spawn(3)
        self.emitter_rng = np.random.default_rng(emitter_seq)
        self.route_rng = np.random.default_rng(route_seq)
        self.noise_rng = np.random.default_rng(noise_seq)

        self.method = config.method
        self._emitter = None
        if config.rates.k12 > 0.0:
            self._emitter = self._build_emitter()
        self._last_kept = [-math.inf, -math.inf]

    def _build_emitter(self):
        if self.method == 'renewal':
            try:
                return _RenewalStream(RenewalIntervalSampler(self.config), self.emitter_rng)
            except np.linalg.LinAlgError as e:
                logger.warning(f"Renewal sampler unavailable ({e}); falling back to jump simulation")
                self.method = 'jump'
        return _JumpSampler(self.config)

    def _emitter_times(self, t_start: float, t_end: float) -> np.ndarray:
        if self._emitter is None:
            return np.empty(0)
        if isinstance(self._emitter, _RenewalStream):
            return self._emitter.detections(t_start, t_end)
        return self._emitter.detections(self.emitter_rng, t_start, t_end)

    def _noise_times(self, t_start: float, t_end: float) -> np.ndarray:
        """Background plus dark counts: one Poisson process per detector"""
        rate = self.config.noise_rate
        if rate <= 0.0:
            return np.empty(0)
        count = self.noise_rng.poisson(rate * (t_end - t_start) / NS_PER_S)
        return np.sort(self.noise_rng.uniform(t_start, t_end, count))

    def block(self, t_start: float, t_end: float) -> EventStream:
        """Simulate the clicks in [t_start, t_end) ns"""
        config = self.config
        emitted = self._emitter_times(t_start, t_end)
        to_a = self.route_rng.random(emitted.size) < config.beamsplit_ratio

        channels = []
        for detector, photons in ((DETECTOR_A, emitted[to_a]), (DETECTOR_B, emitted[~to_a])):
            times = np.sort(np.concatenate([photons, self._noise_times(t_start, t_end)]))
            times, self._last_kept[detector] = _apply_dead_time(
                times, config.dead_time_ns, self._last_kept[detector])
            ticks = np.floor(times / config.timestamp_resolution_ns).astype(np.int64)
            channels.append((ticks, np.full(ticks.size, detector, dtype=np.uint8)))

        ticks = np.concatenate([channels[0][0], channels[1][0]])
        detectors = np.concatenate([channels[0][1], channels[1][1]])
        order = np.lexsort((detectors, ticks))
        return EventStream(ticks[order], detectors[order], config.timestamp_resolution_ns,
                           (t_end - t_start) / NS_PER_S)

    def __iter__(self) -> Iterator[EventStream]:
        total_ns = self.config.duration_s * NS_PER_S
        block_ns = self.block_duration_s * NS_PER_S
        n_blocks = max(1, int(math.ceil(total_ns / block_ns - 1e-12)))
        for index in range(n_blocks):
            t_start = index * block_ns
            t_end = min((index + 1) * block_ns, total_ns)
            yield self.block(t_start, t_end)


def iter_event_blocks(config: SimConfig, block_duration_s: Optional[float] = None) -> Iterator[EventStream]:
    """Stream the simulated acquisition as consecutive time-ordered blocks"""
    return iter(EventSimulator(config, block_duration_s))


def simulate_events(config: SimConfig, block_duration_s: Optional[float] = None) -> EventStream:
    """
    Simulate a complete detection stream

    Raises:
        ConfigValidationError: the expected number of events exceeds MAX_EVENTS_IN_MEMORY;
            use iter_event_blocks to consume such runs incrementally
    """
    expected = expected_event_count(config)
    if expected > Config.MAX_EVENTS_IN_MEMORY:
        raise ConfigValidationError(
            f"expected {expected:.3g} events exceeds the in-memory budget of {Config.MAX_EVENTS_IN_MEMORY}",
            field='duration_s')

    start_time = time.time()
    blocks = list(iter_event_blocks(config, block_duration_s))
    stream = EventStream.concatenate(blocks)

    logger.debug(f"Simulated {len(stream)} events over {config.duration_s} s "
                 f"(seed {config.rng_seed}, method {config.method})")
    if Config.ENABLE_PERFORMANCE_LOGGING:
        KineticsLogger.log_data_processing("simulate_events", len(stream), time.time() - start_time, True)
    return stream
