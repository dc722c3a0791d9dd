# estimation/models.py
"""
Result types of the g2 analysis chain
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from kinetics.models import RateConstants, DetectionEfficiency, PowerModel
from photon_sim.models import G2Curve
from utils.errors import InvalidParameterError

FIT_PARAMETERS = ('g_e', 'k_tm', 'k_1m')


def _symmetric(matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    return 0.5 * (matrix + matrix.T)


def _number_or_nan(value) -> float:
    """JSON null (written for NaN) back to NaN"""
    return math.nan if value is None else float(value)


@dataclass
class FitResult:
    """Weighted least-squares fit of g2(tau)"""
    g_e: float
    k_tm: float
    k_1m: float
    covariance: np.ndarray
    reduced_chi2: float
    iterations: int
    converged: bool
    amplitude: float = 1.0
    tau0_ns: float = 0.0
    n_points: int = 0
    message: str = ''

    def __post_init__(self):
        self.covariance = _symmetric(self.covariance)
        if self.covariance.shape != (3, 3):
            raise InvalidParameterError("covariance must be 3x3 over (g_e, k_tm, k_1m)")
        if self.converged and not (self.k_tm > self.k_1m >= 0.0):
            raise InvalidParameterError(
                f"converged fit must satisfy k_tm > k_1m >= 0 (k_tm={self.k_tm}, k_1m={self.k_1m})")

    @property
    def parameters(self) -> np.ndarray:
        return np.array([self.g_e, self.k_tm, self.k_1m])

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def fast_rate(self) -> float:
        return 0.5 * (self.k_tm + self.k_1m)

    @property
    def slow_rate(self) -> float:
        return 0.5 * (self.k_tm - self.k_1m)

    def to_dict(self) -> Dict[str, Any]:
        errors = self.std_errors
        return {
            'g_e': self.g_e,
            'k_tm_per_ns': self.k_tm,
            'k_1m_per_ns': self.k_1m,
            'g_e_std': float(errors[0]),
            'k_tm_std_per_ns': float(errors[1]),
            'k_1m_std_per_ns': float(errors[2]),
            'amplitude': self.amplitude,
            'tau0_ns': self.tau0_ns,
            'covariance': self.covariance.tolist(),
            'reduced_chi2': self.reduced_chi2,
            'iterations': self.iterations,
            'converged': self.converged,
            'n_points': self.n_points,
            'message': self.message,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FitResult':
        try:
            return cls(
                g_e=data['g_e'],
                k_tm=data['k_tm_per_ns'],
                k_1m=data['k_1m_per_ns'],
                covariance=np.array(data['covariance'], dtype=float),
                reduced_chi2=_number_or_nan(data.get('reduced_chi2')),
                iterations=data.get('iterations', 0),
                converged=data.get('converged', True),
                amplitude=data.get('amplitude', 1.0),
                tau0_ns=data.get('tau0_ns', 0.0),
                n_points=data.get('n_points', 0),
                message=data.get('message', ''),
            )
        except KeyError as e:
            raise InvalidParameterError(f"missing fit field {e.args[0]}") from None


@dataclass
class PowerPoint:
    """One rung of the power ladder: curve, brightness, fit and (later) rates"""
    power_mW: float
    curve: Optional[G2Curve]
    brightness: float
    fit: FitResult
    rates: Optional[RateConstants] = None
    rate_std: Optional[Dict[str, float]] = None
    brightness_std: float = 0.0

    def __post_init__(self):
        if not (self.power_mW > 0.0):
            raise InvalidParameterError(f"power must be > 0 mW, got {self.power_mW!r}")
        if not (self.brightness > 0.0):
            raise InvalidParameterError(f"brightness must be > 0 counts/s, got {self.brightness!r}")

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'power_mW': self.power_mW,
            'brightness_counts_per_s': self.brightness,
            'brightness_std_counts_per_s': self.brightness_std,
            'fit': self.fit.to_dict(),
        }
        if self.rates is not None:
            data['rates'] = self.rates.to_dict()
        if self.rate_std is not None:
            data['rate_std'] = {f"{name}_per_ns": value for name, value in self.rate_std.items()}
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PowerPoint':
        """Rebuild a point (without its curve) from to_dict output"""
        try:
            power = data['power_mW']
            brightness = data['brightness_counts_per_s']
            fit = FitResult.from_dict(data['fit'])
        except KeyError as e:
            raise InvalidParameterError(f"missing power point field {e.args[0]}") from None
        if power is None or brightness is None:
            raise InvalidParameterError("power point needs power_mW and brightness_counts_per_s")
        rates = RateConstants.from_dict(data['rates']) if data.get('rates') else None
        rate_std = None
        if data.get('rate_std'):
            rate_std = {name[:-len('_per_ns')]: _number_or_nan(value) for name, value in data['rate_std'].items()}
        return cls(power_mW=float(power), curve=None, brightness=float(brightness), fit=fit,
                   rates=rates, rate_std=rate_std,
                   brightness_std=_number_or_nan(data.get('brightness_std_counts_per_s', 0.0)))


@dataclass
class EtaCalibration:
    """Detection efficiency that makes k21 power independent"""
    eta: DetectionEfficiency
    powers_mW: np.ndarray
    k21_values: np.ndarray
    dispersion: float
    rates: List[RateConstants] = field(default_factory=list)
    grid_eta: Optional[np.ndarray] = None
    grid_objective: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (self.dispersion >= 0.0):
            raise InvalidParameterError("dispersion must be >= 0")

    @property
    def k21_mean(self) -> float:
        return float(np.mean(self.k21_values))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'eta': self.eta.eta,
            'k21_dispersion_rsd': self.dispersion,
            'k21_mean_per_ns': self.k21_mean,
            'points': [
                {'power_mW': float(p), 'k21_per_ns': float(k)}
                for p, k in zip(self.powers_mW, self.k21_values)
            ],
        }


@dataclass
class PowerModelFit:
    """Weighted linear regressions of the rates against pump power"""
    model: PowerModel
    std_errors: Dict[str, float]
    residuals: Dict[str, np.ndarray]
    powers_mW: np.ndarray
    weighted: bool = True

    def to_dict(self) -> Dict[str, Any]:
        units = {
            'k12_slope': 'per_ns_mW', 'k12_intercept': 'per_ns', 'k21': 'per_ns',
            'k23_slope': 'per_ns_mW', 'k23_intercept': 'per_ns',
            'k32_slope': 'per_ns_mW', 'k32_intercept': 'per_ns',
        }
        return {
            'model': self.model.to_dict(),
            'std_errors': {f"{name}_{units[name]}": value for name, value in self.std_errors.items()},
            'residuals_per_ns': {name: values.tolist() for name, values in self.residuals.items()},
            'powers_mW': self.powers_mW.tolist(),
            'weighted': self.weighted,
        }


@dataclass
class SaturationFit:
    """Fit of the count rate N(P) through the rate model"""
    model: PowerModel
    powers_mW: np.ndarray
    predicted: np.ndarray
    reference: np.ndarray
    residual_norm: float
    reduced_chi2: float
    free_coefficients: Tuple[str, ...]
    covariance: np.ndarray
    converged: bool
    iterations: int
    eta: float = 0.0
    message: str = ''

    def __post_init__(self):
        if np.any(self.predicted < 0.0):
            raise InvalidParameterError("predicted count rates must be >= 0")

    @property
    def std_errors(self) -> Dict[str, float]:
        errors = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(self.free_coefficients, errors.tolist()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model': self.model.to_dict(),
            'eta': self.eta,
            'free_coefficients': list(self.free_coefficients),
            'std_errors': self.std_errors,
            'residual_norm': self.residual_norm,
            'reduced_chi2': self.reduced_chi2,
            'converged': self.converged,
            'iterations': self.iterations,
            'message': self.message,
        }
