# kinetics package
# Forward and inverse mathematics of the 3-level rate equations

from kinetics.models import RateConstants, Populations, DerivedParams, DetectionEfficiency, PowerModel
from kinetics.rate_equations import (
    generator_matrix, stationary, derived_from_rates, relaxation_rates, populations_at,
    population_trajectory, g2_analytic, g2_bin_averaged, g2_model, count_rate, emission_rate,
)
from kinetics.inversion import rates_from_derived, rates_from_observables, observable_candidates
from kinetics.power import rates_at_power, saturation_curve, two_level_count_rate, two_level_reference_curve
