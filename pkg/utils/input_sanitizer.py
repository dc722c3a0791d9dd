"""
Input sanitization for g2kinetics
Validates run configuration documents field by field before any stage runs
"""

import math
from typing import Any, Callable, Dict, List, Optional, Tuple

from kinetics.models import PowerModel
from photon_sim.models import CORRELATION_MODES, SIMULATION_METHODS, MAX_SEED
from utils.logging_config import get_logger

logger = get_logger('input_sanitizer')

OUTPUT_FORMATS = ('csv', 'json')
EVENT_FORMATS = ('csv', 'binary')
POWER_MODEL_COEFFICIENTS = PowerModel.COEFFICIENTS + ('p_min', 'p_max')

# Field rules: (kind, check, description of the allowed values)
Rule = Tuple[str, Optional[Callable[[Any], bool]], str]


def _positive(value) -> bool:
    return value > 0.0


def _non_negative(value) -> bool:
    return value >= 0.0


def _unit_interval(value) -> bool:
    return 0.0 < value <= 1.0


def _open_unit_interval(value) -> bool:
    return 0.0 < value < 1.0


class RunConfigSanitizer:
    """Checks a run configuration document against the known sections and keys"""

    TOP_LEVEL: Dict[str, Rule] = {
        'seed': ('int?', lambda v: 0 <= v < MAX_SEED, "an integer in [0, 2^64)"),
        'output_dir': ('str', None, "a directory path"),
        'format': ('choice', lambda v: v in OUTPUT_FORMATS, f"one of {OUTPUT_FORMATS}"),
        'power_model_preset': ('str?', None, "a preset name"),
        'power_ladder_mW': ('floats?', lambda v: all(p > 0.0 for p in v), "a list of powers > 0"),
    }

    SECTIONS: Dict[str, Dict[str, Rule]] = {
        'simulation': {
            'duration_s': ('float', _positive, "> 0"),
            'eta': ('float', _unit_interval, "in (0, 1]"),
            'beamsplit_ratio': ('float', _open_unit_interval, "in (0, 1)"),
            'background_rate': ('float', _non_negative, ">= 0 counts/s per detector"),
            'dark_rate': ('float', _non_negative, ">= 0 counts/s per detector"),
            'signal_fraction': ('float?', _unit_interval, "in (0, 1]"),
            'timestamp_resolution_ns': ('float', _positive, "> 0"),
            'method': ('choice', lambda v: v in SIMULATION_METHODS, f"one of {SIMULATION_METHODS}"),
            'dead_time_ns': ('float', _non_negative, ">= 0"),
            'block_duration_s': ('float?', _positive, "> 0"),
            'write_events': ('bool', None, "true or false"),
            'event_format': ('choice', lambda v: v in EVENT_FORMATS, f"one of {EVENT_FORMATS}"),
        },
        'rates': {
            'k12': ('float', _non_negative, ">= 0 per ns"),
            'k21': ('float', _positive, "> 0 per ns"),
            'k23': ('float', _non_negative, ">= 0 per ns"),
            'k32': ('float', _non_negative, ">= 0 per ns"),
        },
        'power_model': {name: ('float', None, "a number") for name in POWER_MODEL_COEFFICIENTS},
        'correlation': {
            'bin_width_ns': ('float', _positive, "> 0"),
            'tau_min_ns': ('float', None, "a number"),
            'tau_max_ns': ('float', None, "a number"),
            'mode': ('choice', lambda v: v in CORRELATION_MODES, f"one of {CORRELATION_MODES}"),
            'correct_first_stop': ('bool', None, "true or false"),
            'n_slices': ('int', lambda v: v >= 1, ">= 1"),
        },
        'analysis': {
            'rho': ('float?', _unit_interval, "in (0, 1]"),
            'fit_amplitude': ('bool', None, "true or false"),
            'fit_offset': ('bool', None, "true or false"),
            'require_converged': ('bool', None, "true or false"),
            'eta': ('float?', _unit_interval, "in (0, 1]"),
            'k21_hint': ('float?', _positive, "> 0 per ns"),
            'eta_min': ('float', _unit_interval, "in (0, 1]"),
            'eta_max': ('float', _unit_interval, "in (0, 1]"),
            'eta_grid_points': ('int', lambda v: v >= 10, ">= 10"),
            'weighted_regression': ('bool', None, "true or false"),
        },
        'saturation': {
            'fit': ('bool', None, "true or false"),
            'free_coefficients': ('strs', lambda v: len(v) > 0 and all(
                name in PowerModel.COEFFICIENTS for name in v),
                f"a non-empty subset of {PowerModel.COEFFICIENTS}"),
        },
        'comparison': {
            'k23': ('float?', _non_negative, ">= 0 per ns"),
            'k32': ('float?', _non_negative, ">= 0 per ns"),
        },
    }

    # Sections that may be null or absent as a whole
    OPTIONAL_SECTIONS = ('rates', 'power_model')

    @classmethod
    def sanitize_run_config(cls, document: Any, require_seed: bool = False) -> Dict[str, Any]:
        """
        Validate and normalize a run configuration document

        Args:
            document: Parsed YAML mapping
            require_seed: Whether the command about to run is stochastic

        Returns:
            Dict with the cleaned config, validation errors as (field, message)
            pairs, and warnings
        """
        result = {
            'config': {},
            'is_valid': False,
            'errors': [],
            'warnings': [],
        }

        if not isinstance(document, dict):
            result['errors'].append(('<root>', "run configuration must be a mapping"))
            return result

        cleaned: Dict[str, Any] = {}
        errors: List[Tuple[str, str]] = result['errors']

        for key, value in document.items():
            if key in cls.TOP_LEVEL:
                cleaned[key] = cls._check_value(key, value, cls.TOP_LEVEL[key], errors)
            elif key in cls.SECTIONS:
                cleaned[key] = cls._check_section(key, value, errors)
            else:
                errors.append((key, "unknown key"))

        if not errors:
            cls._check_cross_fields(cleaned, errors, result['warnings'], require_seed)

        result['config'] = cleaned
        result['is_valid'] = not errors
        if errors:
            logger.debug(f"Run config rejected: {len(errors)} errors, first at {errors[0][0]}")
        else:
            logger.debug(f"Run config accepted with {len(result['warnings'])} warnings")
        return result

    @classmethod
    def _check_section(cls, name: str, section: Any, errors: List[Tuple[str, str]]) -> Optional[Dict[str, Any]]:
        if section is None and name in cls.OPTIONAL_SECTIONS:
            return None
        if not isinstance(section, dict):
            errors.append((name, "must be a mapping"))
            return None
        rules = cls.SECTIONS[name]
        cleaned = {}
        for key, value in section.items():
            field = f"{name}.{key}"
            if key not in rules:
                errors.append((field, "unknown key"))
                continue
            cleaned[key] = cls._check_value(field, value, rules[key], errors)
        return cleaned

    @classmethod
    def _check_value(cls, field: str, value: Any, rule: Rule, errors: List[Tuple[str, str]]) -> Any:
        kind, check, allowed = rule
        optional = kind.endswith('?')
        kind = kind.rstrip('?')

        if value is None:
            if not optional:
                errors.append((field, f"is required; must be {allowed}"))
            return None

        try:
            converted = cls._convert(kind, value)
        except (TypeError, ValueError):
            errors.append((field, f"has the wrong type ({type(value).__name__}); must be {allowed}"))
            return None

        if check is not None and not check(converted):
            errors.append((field, f"value {value!r} is out of range; must be {allowed}"))
            return None
        return converted

    @staticmethod
    def _convert(kind: str, value: Any) -> Any:
        """Coerce YAML scalars; YAML reads 1e-3 as a string, so numeric strings are accepted"""
        if kind == 'float':
            if isinstance(value, bool):
                raise TypeError("bool is not a number")
            converted = float(value)
            if not math.isfinite(converted):
                raise ValueError("not finite")
            return converted
        if kind == 'int':
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError("not an integer")
            return int(value)
        if kind == 'bool':
            if not isinstance(value, bool):
                raise TypeError("not a boolean")
            return value
        if kind in ('str', 'choice'):
            if not isinstance(value, str):
                raise TypeError("not a string")
            return value
        if kind == 'floats':
            if not isinstance(value, (list, tuple)):
                raise TypeError("not a list")
            return [RunConfigSanitizer._convert('float', item) for item in value]
        if kind == 'strs':
            if not isinstance(value, (list, tuple)) or not all(isinstance(item, str) for item in value):
                raise TypeError("not a list of strings")
            return list(value)
        raise ValueError(f"unknown rule kind {kind}")

    @classmethod
    def _check_cross_fields(cls, config: Dict[str, Any], errors: List[Tuple[str, str]],
                            warnings: List[str], require_seed: bool) -> None:
        """Constraints spanning several keys"""
        if require_seed and config.get('seed') is None:
            errors.append(('seed', "is required for stochastic commands"))

        ladder = config.get('power_ladder_mW')
        if ladder:
            if any(b <= a for a, b in zip(ladder, ladder[1:])):
                errors.append(('power_ladder_mW', "must be strictly increasing"))

        if config.get('power_model') and config.get('power_model_preset'):
            errors.append(('power_model', "give either power_model or power_model_preset, not both"))
        if config.get('power_model'):
            missing = [name for name in PowerModel.COEFFICIENTS if name not in config['power_model']]
            if missing:
                errors.append((f"power_model.{missing[0]}", "is required"))

        correlation = config.get('correlation') or {}
        if 'tau_min_ns' in correlation and 'tau_max_ns' in correlation:
            if not correlation['tau_max_ns'] > correlation['tau_min_ns']:
                errors.append(('correlation.tau_max_ns', "must be greater than correlation.tau_min_ns"))
            elif 'bin_width_ns' in correlation:
                n_bins = (correlation['tau_max_ns'] - correlation['tau_min_ns']) / correlation['bin_width_ns']
                if abs(n_bins - round(n_bins)) > 1e-9 * max(n_bins, 1.0):
                    errors.append(('correlation.bin_width_ns', "must divide the delay window evenly"))
                elif n_bins < 10:
                    warnings.append(f"delay window holds only {n_bins:.0f} bins; g2 fits need at least 10")

        analysis = config.get('analysis') or {}
        if 'eta_min' in analysis and 'eta_max' in analysis and not analysis['eta_min'] < analysis['eta_max']:
            errors.append(('analysis.eta_max', "must be greater than analysis.eta_min"))

        simulation = config.get('simulation') or {}
        if simulation.get('signal_fraction') is not None and simulation.get('background_rate'):
            errors.append(('simulation.signal_fraction', "give either signal_fraction or background_rate, not both"))
        if simulation.get('timestamp_resolution_ns') and correlation.get('bin_width_ns'):
            if correlation['bin_width_ns'] < simulation['timestamp_resolution_ns']:
                warnings.append("correlation bin width is finer than the timestamp resolution")

    @classmethod
    def first_error(cls, result: Dict[str, Any]) -> Tuple[str, str]:
        """The first (field, message) pair of a failed sanitization"""
        return result['errors'][0] if result['errors'] else ('', '')
