# data/event_files.py
"""
Event stream files
CSV with header t_ns,detector (fixed-point ns) and a compact little-endian binary format
"""

import os
import struct
from decimal import Decimal
from typing import Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from photon_sim.models import EventStream, DETECTOR_NAMES
from utils.config import Config
from utils.errors import DataFileError
from utils.logging_config import get_logger

logger = get_logger('event_files')

BINARY_MAGIC = b'G2EV'
BINARY_VERSION = 1
# magic, version, resolution_ns, duration_s, event count
BINARY_HEADER = struct.Struct('<4sHddQ')
BINARY_RECORD = np.dtype([('ticks', '<u8'), ('detector', 'u1')])

BINARY_EXTENSIONS = ('.bin', '.g2ev')
METADATA_PREFIX = '#'
# CSV metadata line is padded so it can be rewritten in place on close
METADATA_WIDTH = 96

READ_CHUNK_EVENTS = 1_000_000


def is_binary_path(path: str) -> bool:
    return os.path.splitext(path)[1].lower() in BINARY_EXTENSIONS


def _decimals(resolution_ns: float) -> Tuple[int, int]:
    """Decimal places of the resolution and the resolution in units of 10^-places ns"""
    exponent = Decimal(repr(float(resolution_ns))).normalize().as_tuple().exponent
    places = max(0, -int(exponent))
    return places, int(round(resolution_ns * 10 ** places))


def _fixed_point(ticks: np.ndarray, resolution_ns: float) -> pd.Series:
    """Exact decimal rendering of tick timestamps in ns"""
    places, step = _decimals(resolution_ns)
    scaled = pd.Series(ticks.astype(np.int64) * step)
    if places == 0:
        return scaled.astype(str)
    unit = 10 ** places
    return (scaled // unit).astype(str) + '.' + (scaled % unit).astype(str).str.zfill(places)


def metadata_line(**fields) -> str:
    return METADATA_PREFIX + ' ' + ' '.join(f"{key}={value!r}" for key, value in fields.items()) + '\n'


def read_metadata(path: str) -> dict:
    """key=value pairs from a leading comment line, empty if absent"""
    with open(path, 'r', encoding='utf-8') as handle:
        first = handle.readline()
    if not first.startswith(METADATA_PREFIX):
        return {}
    metadata = {}
    for item in first[1:].split():
        key, _, value = item.partition('=')
        try:
            metadata[key] = float(value)
        except ValueError:
            metadata[key] = value.strip("'\"")
    return metadata


class EventWriter:
    """
    Incremental writer of an event file, one block at a time

    The binary header is rewritten on close with the final count and duration.
    """

    def __init__(self, path: str, resolution_ns: float, binary: Optional[bool] = None):
        self.path = path
        self.resolution_ns = resolution_ns
        self.binary = is_binary_path(path) if binary is None else binary
        self.count = 0
        self.duration_s = 0.0
        try:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            if self.binary:
                self._handle = open(path, 'wb')
                self._handle.write(BINARY_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, resolution_ns, 0.0, 0))
            else:
                self._handle = open(path, 'w', encoding='utf-8', newline='')
                line = metadata_line(resolution_ns=resolution_ns, duration_s=0.0).rstrip('\n')
                self._handle.write(line.ljust(METADATA_WIDTH) + '\n')
                self._handle.write('t_ns,detector\n')
        except OSError as e:
            raise DataFileError(f"cannot open {path} for writing: {e}") from e

    def write(self, block: EventStream) -> None:
        if block.resolution_ns != self.resolution_ns:
            raise DataFileError("block resolution does not match the file")
        if len(block) and block.ticks[0] < 0:
            raise DataFileError("event files hold non-negative timestamps only")
        try:
            if self.binary:
                records = np.empty(len(block), dtype=BINARY_RECORD)
                records['ticks'] = block.ticks
                records['detector'] = block.detectors
                self._handle.write(records.tobytes())
            elif len(block):
                table = pd.DataFrame({
                    't_ns': _fixed_point(block.ticks, self.resolution_ns),
                    'detector': np.asarray(DETECTOR_NAMES)[block.detectors],
                })
                table.to_csv(self._handle, header=False, index=False)
        except OSError as e:
            raise DataFileError(f"failed writing {self.path}: {e}") from e
        self.count += len(block)
        self.duration_s += block.duration_s

    def close(self) -> None:
        try:
            self._handle.seek(0)
            if self.binary:
                self._handle.write(BINARY_HEADER.pack(
                    BINARY_MAGIC, BINARY_VERSION, self.resolution_ns, self.duration_s, self.count))
            else:
                line = metadata_line(resolution_ns=self.resolution_ns, duration_s=self.duration_s)
                self._handle.write(line.rstrip('\n').ljust(METADATA_WIDTH)[:METADATA_WIDTH])
            self._handle.close()
        except OSError as e:
            raise DataFileError(f"failed finalizing {self.path}: {e}") from e
        logger.debug(f"Wrote {self.count} events to {self.path}")

    def __enter__(self) -> 'EventWriter':
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


def write_events(path: str, events: EventStream, binary: Optional[bool] = None) -> None:
    """Write a complete event stream (format from the extension unless given)"""
    with EventWriter(path, events.resolution_ns, binary) as writer:
        writer.write(events)


def _read_binary_header(handle, path: str) -> Tuple[float, float, int]:
    raw = handle.read(BINARY_HEADER.size)
    if len(raw) != BINARY_HEADER.size:
        raise DataFileError(f"{path}: truncated header")
    magic, version, resolution, duration, count = BINARY_HEADER.unpack(raw)
    if magic != BINARY_MAGIC:
        raise DataFileError(f"{path}: not an event file (bad magic {magic!r})")
    if version != BINARY_VERSION:
        raise DataFileError(f"{path}: unsupported event file version {version}")
    return resolution, duration, count


def _read_csv_table(path: str, chunksize: Optional[int] = None):
    return pd.read_csv(path, comment=METADATA_PREFIX, dtype={'t_ns': str, 'detector': str},
                       skip_blank_lines=True, chunksize=chunksize)


def _csv_block(table: pd.DataFrame, resolution_ns: float, duration_s: float, path: str) -> EventStream:
    if list(table.columns) != ['t_ns', 'detector']:
        raise DataFileError(f"{path}: expected header t_ns,detector, got {','.join(table.columns)}")
    detectors = table['detector'].str.strip().map({'A': 0, 'B': 1})
    if detectors.isna().any():
        raise DataFileError(f"{path}: detector column must contain only A or B")
    try:
        ticks = np.rint(table['t_ns'].astype(float).to_numpy() / resolution_ns).astype(np.int64)
    except ValueError as e:
        raise DataFileError(f"{path}: malformed timestamp: {e}") from e
    return EventStream(ticks, detectors.to_numpy(dtype=np.uint8), resolution_ns, duration_s)


def _csv_settings(path: str, resolution_ns: Optional[float], duration_s: Optional[float]) -> Tuple[float, Optional[float]]:
    metadata = read_metadata(path)
    resolution = resolution_ns or metadata.get('resolution_ns') or Config.DEFAULT_TIMESTAMP_RESOLUTION_NS
    duration = duration_s if duration_s is not None else metadata.get('duration_s')
    return float(resolution), (float(duration) if duration else None)


def read_events(path: str, resolution_ns: Optional[float] = None,
                duration_s: Optional[float] = None) -> EventStream:
    """
    Read an event file

    Plain CSV files without a metadata line need resolution_ns (default from
    config) and duration_s (default: time of the last event).
    """
    if not os.path.exists(path):
        raise DataFileError(f"event file not found: {path}")
    try:
        if is_binary_path(path):
            with open(path, 'rb') as handle:
                resolution, duration, count = _read_binary_header(handle, path)
                records = np.frombuffer(handle.read(), dtype=BINARY_RECORD)
            if records.size != count:
                raise DataFileError(f"{path}: header announces {count} events, found {records.size}")
            return EventStream(records['ticks'].astype(np.int64), records['detector'].copy(),
                               resolution, duration_s if duration_s is not None else duration)

        resolution, duration = _csv_settings(path, resolution_ns, duration_s)
        stream = _csv_block(_read_csv_table(path), resolution, 0.0, path)
        if duration is None:
            duration = float(stream.ticks[-1] + 1) * resolution / 1e9 if len(stream) else 0.0
        stream.duration_s = duration
        return stream
    except DataFileError:
        raise
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise DataFileError(f"cannot read {path}: {e}") from e


def iter_event_file(path: str, chunk_events: int = READ_CHUNK_EVENTS,
                    resolution_ns: Optional[float] = None,
                    duration_s: Optional[float] = None) -> Iterator[EventStream]:
    """
    Stream an event file in chunks of chunk_events

    The file duration is carried by the last chunk, so summing chunk
    durations gives the acquisition time.
    """
    if not os.path.exists(path):
        raise DataFileError(f"event file not found: {path}")
    try:
        if is_binary_path(path):
            with open(path, 'rb') as handle:
                resolution, duration, count = _read_binary_header(handle, path)
                remaining = count
                while True:
                    raw = handle.read(chunk_events * BINARY_RECORD.itemsize)
                    records = np.frombuffer(raw, dtype=BINARY_RECORD)
                    remaining -= records.size
                    last = remaining <= 0 or records.size < chunk_events
                    yield EventStream(records['ticks'].astype(np.int64), records['detector'].copy(),
                                      resolution, duration if last else 0.0)
                    if last:
                        return

        resolution, duration = _csv_settings(path, resolution_ns, duration_s)
        last_tick = -1
        for table in _read_csv_table(path, chunksize=chunk_events):
            block = _csv_block(table, resolution, 0.0, path)
            if len(block):
                last_tick = int(block.ticks[-1])
            yield block
        if duration is None:
            duration = float(last_tick + 1) * resolution / 1e9
        yield EventStream.empty(resolution, duration)
    except DataFileError:
        raise
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise DataFileError(f"cannot read {path}: {e}") from e
