# cli/run_config.py
"""
Run configuration: YAML document merged over the defaults, overridden from
the command line and validated by RunConfigSanitizer
"""

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml
from scipy.optimize import brentq

from config.presets import DEFAULT_RUN_CONFIG, get_power_model
from kinetics.models import DetectionEfficiency, PowerModel, RateConstants
from kinetics.power import rates_at_power
from kinetics.rate_equations import emission_rate, NS_PER_S
from photon_sim.models import SimConfig
from utils.errors import ConfigValidationError, G2KineticsError
from utils.input_sanitizer import RunConfigSanitizer
from utils.logging_config import get_logger

logger = get_logger('run_config')


def _read_yaml(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigValidationError(f"config file not found: {path}", field='config')
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            document = yaml.safe_load(handle)
    except yaml.YAMLError as e:
        raise ConfigValidationError(f"not valid YAML: {e}", field='config') from e
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigValidationError("top level must be a mapping", field='config')
    return document


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive merge; mappings merge key by key, everything else replaces"""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_set_override(expression: str) -> Dict[str, Any]:
    """
    Turn 'section.key=value' into a nested mapping

    The value is parsed as YAML, so numbers, booleans, null and [lists] work.
    """
    path, sep, raw_value = expression.partition('=')
    if not sep or not path.strip():
        raise ConfigValidationError(f"override '{expression}' is not of the form key=value", field='--set')
    try:
        value = yaml.safe_load(raw_value) if raw_value.strip() else None
    except yaml.YAMLError as e:
        raise ConfigValidationError(f"cannot parse value in '{expression}': {e}", field='--set') from e
    nested: Dict[str, Any] = {}
    cursor = nested
    keys = [part.strip() for part in path.split('.')]
    for key in keys[:-1]:
        cursor = cursor.setdefault(key, {})
    cursor[keys[-1]] = value
    return nested


def _choose_power_model_source(document: Dict[str, Any], user: Dict[str, Any]) -> None:
    """An explicit power_model in the user's layers displaces the default preset"""
    if user.get('power_model') and 'power_model_preset' not in user:
        document['power_model_preset'] = None


@dataclass
class RunConfig:
    """Validated run configuration"""
    document: Dict[str, Any]
    source: Optional[str] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def seed(self) -> Optional[int]:
        return self.document.get('seed')

    @property
    def output_dir(self) -> str:
        return self.document['output_dir']

    @property
    def format(self) -> str:
        return self.document['format']

    @property
    def simulation(self) -> Dict[str, Any]:
        return self.document['simulation']

    @property
    def correlation(self) -> Dict[str, Any]:
        return self.document['correlation']

    @property
    def analysis(self) -> Dict[str, Any]:
        return self.document['analysis']

    @property
    def saturation(self) -> Dict[str, Any]:
        return self.document['saturation']

    @property
    def comparison(self) -> Dict[str, Any]:
        return self.document['comparison']

    @property
    def power_ladder(self) -> List[float]:
        return list(self.document.get('power_ladder_mW') or [])

    @property
    def window(self) -> tuple:
        return self.correlation['tau_min_ns'], self.correlation['tau_max_ns']

    def power_model(self) -> Optional[PowerModel]:
        """PowerModel from the preset or the explicit coefficients, None if neither is set"""
        preset = self.document.get('power_model_preset')
        if preset:
            return get_power_model(preset)
        coefficients = self.document.get('power_model')
        if coefficients:
            try:
                return PowerModel(**coefficients)
            except G2KineticsError as e:
                raise ConfigValidationError(str(e), field='power_model') from e
        return None

    def fixed_rates(self) -> RateConstants:
        rates = self.document.get('rates')
        if not rates:
            raise ConfigValidationError("no rates given and no power model configured", field='rates')
        try:
            return RateConstants(**rates)
        except G2KineticsError as e:
            raise ConfigValidationError(str(e), field='rates') from e

    def rates_at(self, power_mW: Optional[float]) -> RateConstants:
        """Truth rates at one ladder power, or the fixed rates without a ladder"""
        model = self.power_model()
        if power_mW is None or model is None:
            return self.fixed_rates()
        try:
            return rates_at_power(model, power_mW)
        except G2KineticsError as e:
            raise ConfigValidationError(str(e), field='power_ladder_mW') from e

    def eta(self) -> DetectionEfficiency:
        return DetectionEfficiency(self.simulation['eta'])

    def sim_config(self, rates: RateConstants, rng_seed: int) -> SimConfig:
        simulation = self.simulation
        background = simulation['background_rate']
        if simulation.get('signal_fraction') is not None:
            background = background_for_signal_fraction(
                rates, simulation['eta'], simulation['beamsplit_ratio'],
                simulation['dark_rate'], simulation['signal_fraction'])
        return SimConfig(
            rates=rates,
            eta=self.eta(),
            duration_s=simulation['duration_s'],
            beamsplit_ratio=simulation['beamsplit_ratio'],
            background_rate=background,
            dark_rate=simulation['dark_rate'],
            timestamp_resolution_ns=simulation['timestamp_resolution_ns'],
            rng_seed=rng_seed,
            method=simulation['method'],
            dead_time_ns=simulation['dead_time_ns'],
        )

    def power_seeds(self, count: int) -> List[int]:
        """One 64-bit simulation seed per ladder power, spawned from the run seed"""
        if self.seed is None:
            raise ConfigValidationError("is required for stochastic commands", field='seed')
        children = np.random.SeedSequence(self.seed).spawn(count)
        return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the validated document, output location excluded"""
        document = {key: value for key, value in self.document.items() if key != 'output_dir'}
        canonical = json.dumps(document, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.document)


def background_for_signal_fraction(rates: RateConstants, eta: float, beamsplit_ratio: float,
                                   dark_rate: float, target_rho: float) -> float:
    """
    Background rate per detector giving sqrt(rho_A * rho_B) = target_rho

    Dark counts count as background, so the result is what remains to add
    on top of them (never negative).
    """
    signal = eta * emission_rate(rates) * NS_PER_S if rates.k12 > 0.0 else 0.0
    signal_a, signal_b = beamsplit_ratio * signal, (1.0 - beamsplit_ratio) * signal
    if target_rho >= 1.0 or signal <= 0.0:
        return 0.0

    def excess(noise: float) -> float:
        return math.sqrt(signal_a / (signal_a + noise) * signal_b / (signal_b + noise)) - target_rho

    upper = signal
    while excess(upper) > 0.0:
        upper *= 2.0
    noise = brentq(excess, 0.0, upper, xtol=1e-9 * signal)
    return max(noise - dark_rate, 0.0)


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None,
                    set_expressions: Sequence[str] = (), require_seed: bool = False) -> RunConfig:
    """
    Build the run configuration for one command

    Layers, lowest first: config/default_run.yaml, the user's file, flag
    overrides (--seed/--out/--format), then --set expressions.

    Raises:
        ConfigValidationError: naming the first offending dotted field
    """
    document = _read_yaml(DEFAULT_RUN_CONFIG)
    user: Dict[str, Any] = {}
    if path:
        user = deep_merge(user, _read_yaml(path))
    if overrides:
        user = deep_merge(user, {key: value for key, value in overrides.items() if value is not None})
    for expression in set_expressions:
        user = deep_merge(user, parse_set_override(expression))

    document = deep_merge(document, user)
    _choose_power_model_source(document, user)

    result = RunConfigSanitizer.sanitize_run_config(document, require_seed=require_seed)
    if not result['is_valid']:
        field_name, message = RunConfigSanitizer.first_error(result)
        raise ConfigValidationError(message, field=field_name)
    for warning in result['warnings']:
        logger.warning(f"Run config: {warning}")

    config = RunConfig(document=result['config'], source=path, warnings=result['warnings'])
    # Surface preset/coefficient problems at load time
    config.power_model()
    logger.debug(f"Run config loaded from {path or 'defaults'} (hash {config.config_hash()[:12]})")
    return config
