# photon_sim package
# Simulated HBT acquisition: event streams, delay histograms and g2 normalization

from photon_sim.models import (
    SimConfig, DetectionEvent, EventStream, CoincidenceHistogram, G2Curve,
    FULL_CORRELATION, START_STOP, DETECTOR_A, DETECTOR_B,
)
from photon_sim.simulator import simulate_events, iter_event_blocks, signal_fraction, expected_event_count
from photon_sim.correlator import correlate, correlate_blocks, correlate_sliced, StreamingCorrelator
from photon_sim.normalization import normalize
