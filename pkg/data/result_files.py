# data/result_files.py
"""
Result files: g2 curves, raw histograms, saturation tables and JSON reports
"""

import json
import math
import os
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from data.event_files import METADATA_PREFIX, is_binary_path, metadata_line, read_metadata
from photon_sim.models import CoincidenceHistogram, G2Curve, FULL_CORRELATION
from utils.errors import DataFileError, G2KineticsError
from utils.logging_config import get_logger

logger = get_logger('result_files')

CURVE_COLUMNS = ['tau_ns', 'g2', 'sigma']
HISTOGRAM_COLUMNS = ['tau_ns', 'counts']
SATURATION_COLUMNS = ['power_mW', 'counts_per_s']


def _prepare(path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)


def write_table(path: str, table: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> None:
    try:
        _prepare(path)
        with open(path, 'w', encoding='utf-8', newline='') as handle:
            if metadata:
                handle.write(metadata_line(**metadata))
            # Default float formatting is repr, which reads back bit-identical
            table.to_csv(handle, index=False)
    except OSError as e:
        raise DataFileError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {len(table)} rows to {path}")


def _read_table(path: str, required: Sequence[str]) -> Tuple[pd.DataFrame, dict]:
    if not os.path.exists(path):
        raise DataFileError(f"file not found: {path}")
    try:
        table = pd.read_csv(path, comment=METADATA_PREFIX, float_precision='round_trip')
        metadata = read_metadata(path)
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataFileError(f"cannot read {path}: {e}") from e
    missing = [column for column in required if column not in table.columns]
    if missing:
        raise DataFileError(f"{path}: missing columns {', '.join(missing)}")
    return table, metadata


def write_curve(path: str, curve: G2Curve, overlays: Optional[Dict[str, np.ndarray]] = None) -> None:
    """
    Write tau_ns,g2,sigma plus optional model columns

    Correction state (rho, bin width, mode, flags) goes in a leading
    comment line so a re-read curve behaves the same downstream.
    """
    table = pd.DataFrame({'tau_ns': curve.tau_ns, 'g2': curve.g2, 'sigma': curve.sigma})
    for name, values in (overlays or {}).items():
        table[name] = np.asarray(values, dtype=float)
    metadata = {'mode': curve.mode}
    if curve.rho is not None:
        metadata['rho'] = curve.rho
    if curve.bin_width_ns is not None:
        metadata['bin_width_ns'] = curve.bin_width_ns
    if curve.flags:
        metadata['flags'] = ','.join(curve.flags)
    write_table(path, table, metadata)


def read_curve(path: str, bin_width_ns: Optional[float] = None, rho: Optional[float] = None) -> G2Curve:
    """Read a curve file; explicit bin_width_ns / rho override the file's metadata"""
    table, metadata = _read_table(path, CURVE_COLUMNS)
    flags = metadata.get('flags')
    try:
        return G2Curve(
            tau_ns=table['tau_ns'].to_numpy(dtype=float),
            g2=table['g2'].to_numpy(dtype=float),
            sigma=table['sigma'].to_numpy(dtype=float),
            rho=rho if rho is not None else metadata.get('rho'),
            bin_width_ns=bin_width_ns if bin_width_ns is not None else metadata.get('bin_width_ns'),
            mode=metadata.get('mode', FULL_CORRELATION),
            flags=tuple(str(flags).split(',')) if flags else (),
        )
    except G2KineticsError as e:
        raise DataFileError(f"{path}: invalid curve: {e}") from e


def write_histogram(path: str, hist: CoincidenceHistogram) -> None:
    """Raw counts per bin center with the singles and duration needed to normalize"""
    table = pd.DataFrame({'tau_ns': hist.centers_ns, 'counts': hist.counts})
    write_table(path, table, {
        'bin_width_ns': hist.bin_width_ns,
        'tau_min_ns': hist.tau_min_ns,
        'tau_max_ns': hist.tau_max_ns,
        'singles_a': hist.singles_a,
        'singles_b': hist.singles_b,
        'duration_s': hist.duration_s,
        'mode': hist.mode,
    })


def read_histogram(path: str) -> CoincidenceHistogram:
    table, metadata = _read_table(path, HISTOGRAM_COLUMNS)
    required = ('bin_width_ns', 'tau_min_ns', 'tau_max_ns', 'singles_a', 'singles_b', 'duration_s')
    missing = [key for key in required if key not in metadata]
    if missing:
        raise DataFileError(f"{path}: histogram metadata line lacks {', '.join(missing)}")
    try:
        return CoincidenceHistogram(
            bin_width_ns=float(metadata['bin_width_ns']),
            tau_min_ns=float(metadata['tau_min_ns']),
            tau_max_ns=float(metadata['tau_max_ns']),
            counts=table['counts'].to_numpy(dtype=np.int64),
            singles_a=int(metadata['singles_a']),
            singles_b=int(metadata['singles_b']),
            duration_s=float(metadata['duration_s']),
            mode=metadata.get('mode', FULL_CORRELATION),
        )
    except G2KineticsError as e:
        raise DataFileError(f"{path}: invalid histogram: {e}") from e


def write_saturation(path: str, powers_mW: Sequence[float], counts_per_s: Sequence[float],
                     extra: Optional[Dict[str, Sequence[float]]] = None) -> None:
    table = pd.DataFrame({'power_mW': np.asarray(powers_mW, dtype=float),
                          'counts_per_s': np.asarray(counts_per_s, dtype=float)})
    for name, values in (extra or {}).items():
        table[name] = np.asarray(values, dtype=float)
    write_table(path, table)


def read_saturation(path: str) -> pd.DataFrame:
    """Saturation table sorted by power; extra columns are kept"""
    table, _ = _read_table(path, SATURATION_COLUMNS)
    if (table['power_mW'] <= 0).any() or (table['counts_per_s'] < 0).any():
        raise DataFileError(f"{path}: powers must be > 0 and count rates >= 0")
    return table.sort_values('power_mW').reset_index(drop=True)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _finite_or_none(document: Any) -> Any:
    """NaN and inf become null so the output is strict JSON"""
    if isinstance(document, float) and not math.isfinite(document):
        return None
    if isinstance(document, dict):
        return {key: _finite_or_none(value) for key, value in document.items()}
    if isinstance(document, (list, tuple)):
        return [_finite_or_none(value) for value in document]
    return document


def write_json(path: str, document: Dict[str, Any]) -> None:
    """Pretty-printed JSON; floats use repr so they survive a round trip exactly"""
    try:
        _prepare(path)
        encoded = json.loads(json.dumps(document, default=_json_default))
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(_finite_or_none(encoded), handle, indent=2, allow_nan=False)
            handle.write('\n')
    except (OSError, TypeError, ValueError) as e:
        raise DataFileError(f"cannot write {path}: {e}") from e


def read_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise DataFileError(f"file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise DataFileError(f"cannot read {path}: {e}") from e


def file_kind(path: str) -> str:
    """'events', 'histogram' or 'curve' from the extension and CSV header"""
    if is_binary_path(path):
        return 'events'
    if not os.path.exists(path):
        raise DataFileError(f"file not found: {path}")
    try:
        columns = set(pd.read_csv(path, comment=METADATA_PREFIX, nrows=0).columns)
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataFileError(f"cannot read {path}: {e}") from e
    if {'t_ns', 'detector'} <= columns:
        return 'events'
    if set(CURVE_COLUMNS) <= columns:
        return 'curve'
    if set(HISTOGRAM_COLUMNS) <= columns:
        return 'histogram'
    raise DataFileError(f"{path}: unrecognized columns {', '.join(sorted(columns))}")
