# kinetics/models.py
"""
Data models for the three-level rate-equation system
Rates in ns^-1, times in ns, powers in mW
"""

import math
from dataclasses import dataclass, asdict
from typing import Dict, Any, Tuple

import numpy as np

from utils.errors import InvalidParameterError

POPULATION_TOLERANCE = 1e-12


def _check_finite_nonnegative(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise InvalidParameterError(f"{name} must be finite and >= 0, got {value!r}")
    return value


@dataclass(frozen=True)
class RateConstants:
    """The four transition rates of the 3-level system (ns^-1)"""
    k12: float
    k21: float
    k23: float
    k32: float

    def __post_init__(self):
        for name in ('k12', 'k21', 'k23', 'k32'):
            object.__setattr__(self, name, _check_finite_nonnegative(name, getattr(self, name)))
        if self.k21 <= 0.0:
            raise InvalidParameterError("k21 must be > 0")
        # A trap that is never entered may have no exit rate
        if self.k32 <= 0.0 and self.k23 > 0.0:
            raise InvalidParameterError("k32 must be > 0 when k23 > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.k12, self.k21, self.k23, self.k32], dtype=float)

    @classmethod
    def from_array(cls, values) -> 'RateConstants':
        k12, k21, k23, k32 = (float(v) for v in values)
        return cls(k12=k12, k21=k21, k23=k23, k32=k32)

    def to_dict(self) -> Dict[str, float]:
        """Serialize with units in the field names"""
        return {f"{name}_per_ns": value for name, value in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RateConstants':
        """Create RateConstants from a unit-suffixed mapping"""
        try:
            return cls(**{name: data[f"{name}_per_ns"] for name in ('k12', 'k21', 'k23', 'k32')})
        except KeyError as e:
            raise InvalidParameterError(f"missing rate field {e.args[0]}") from None

    @property
    def radiative_lifetime_ns(self) -> float:
        return 1.0 / self.k21


@dataclass(frozen=True)
class Populations:
    """Occupation probabilities of levels 1, 2 and 3"""
    sigma1: float
    sigma2: float
    sigma3: float

    def __post_init__(self):
        values = (self.sigma1, self.sigma2, self.sigma3)
        for value in values:
            if not (-POPULATION_TOLERANCE <= value <= 1.0 + POPULATION_TOLERANCE):
                raise InvalidParameterError(f"population {value!r} outside [0, 1]")
        if abs(sum(values) - 1.0) > POPULATION_TOLERANCE * 10:
            raise InvalidParameterError(f"populations sum to {sum(values)!r}, expected 1")

    @classmethod
    def ground_state(cls) -> 'Populations':
        """Emitter just after a photon emission"""
        return cls(1.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2, self.sigma3], dtype=float)

    @classmethod
    def from_array(cls, values) -> 'Populations':
        values = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
        values = values / values.sum()
        return cls(float(values[0]), float(values[1]), float(values[2]))


@dataclass(frozen=True)
class DerivedParams:
    """Fit observables of g2(tau) plus the stationary excited population"""
    g_e: float
    k_tm: float
    k_1m: float
    sigma2_inf: float

    def __post_init__(self):
        for name in ('g_e', 'k_tm', 'k_1m', 'sigma2_inf'):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if self.k_tm <= 0.0:
            raise InvalidParameterError("k_tm must be > 0")
        if not (0.0 <= self.k_1m < self.k_tm):
            raise InvalidParameterError(f"k_1m must satisfy 0 <= k_1m < k_tm, got {self.k_1m!r}")
        if not (0.0 < self.sigma2_inf < 1.0):
            raise InvalidParameterError(f"sigma2_inf must be in (0, 1), got {self.sigma2_inf!r}")

    @property
    def determinant(self) -> float:
        """(k_tm^2 - k_1m^2)/4, the product of the two relaxation rates"""
        return (self.k_tm - self.k_1m) * (self.k_tm + self.k_1m) / 4.0

    def to_dict(self) -> Dict[str, float]:
        return {
            'g_e': self.g_e,
            'k_tm_per_ns': self.k_tm,
            'k_1m_per_ns': self.k_1m,
            'sigma2_inf': self.sigma2_inf,
        }


@dataclass(frozen=True)
class DetectionEfficiency:
    """Probability that an emitted photon produces a recorded click"""
    eta: float

    def __post_init__(self):
        eta = float(self.eta)
        if not math.isfinite(eta) or not (0.0 < eta <= 1.0):
            raise InvalidParameterError(f"eta must be in (0, 1], got {self.eta!r}")
        object.__setattr__(self, 'eta', eta)


@dataclass(frozen=True)
class PowerModel:
    """Linear pump-power dependence of k12, k23, k32 with constant k21"""
    k12_slope: float
    k12_intercept: float
    k21: float
    k23_slope: float
    k23_intercept: float
    k32_slope: float
    k32_intercept: float
    p_min: float = 0.0
    p_max: float = 50.0

    COEFFICIENTS = ('k12_slope', 'k12_intercept', 'k21', 'k23_slope', 'k23_intercept',
                    'k32_slope', 'k32_intercept')

    def __post_init__(self):
        for name in self.COEFFICIENTS + ('p_min', 'p_max'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidParameterError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.k21 <= 0.0:
            raise InvalidParameterError("k21 must be > 0")
        if not (0.0 <= self.p_min < self.p_max):
            raise InvalidParameterError("power range must satisfy 0 <= p_min < p_max")
        for rate in ('k12', 'k23', 'k32'):
            for power in (self.p_min, self.p_max):
                value = self.linear(rate, power)
                if value < -1e-15:
                    raise InvalidParameterError(
                        f"{rate} = {value:.3g} ns^-1 is negative at {power} mW inside the validity range")

    def linear(self, rate: str, power: float) -> float:
        """Evaluate slope*P + intercept for k12, k23 or k32"""
        return getattr(self, f"{rate}_slope") * power + getattr(self, f"{rate}_intercept")

    @property
    def validity_range(self) -> Tuple[float, float]:
        return self.p_min, self.p_max

    def coefficient_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.COEFFICIENTS], dtype=float)

    def with_coefficients(self, **updates: float) -> 'PowerModel':
        values = {name: getattr(self, name) for name in self.COEFFICIENTS + ('p_min', 'p_max')}
        values.update(updates)
        return PowerModel(**values)

    def to_dict(self) -> Dict[str, float]:
        return {
            'k12_slope_per_ns_mW': self.k12_slope,
            'k12_intercept_per_ns': self.k12_intercept,
            'k21_per_ns': self.k21,
            'k23_slope_per_ns_mW': self.k23_slope,
            'k23_intercept_per_ns': self.k23_intercept,
            'k32_slope_per_ns_mW': self.k32_slope,
            'k32_intercept_per_ns': self.k32_intercept,
            'p_min_mW': self.p_min,
            'p_max_mW': self.p_max,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PowerModel':
        """Create a PowerModel from a unit-suffixed mapping"""
        try:
            return cls(
                k12_slope=data['k12_slope_per_ns_mW'],
                k12_intercept=data.get('k12_intercept_per_ns', 0.0),
                k21=data['k21_per_ns'],
                k23_slope=data['k23_slope_per_ns_mW'],
                k23_intercept=data.get('k23_intercept_per_ns', 0.0),
                k32_slope=data['k32_slope_per_ns_mW'],
                k32_intercept=data.get('k32_intercept_per_ns', 0.0),
                p_min=data.get('p_min_mW', 0.0),
                p_max=data.get('p_max_mW', 50.0),
            )
        except KeyError as e:
            raise InvalidParameterError(f"missing power model field {e.args[0]}") from None
