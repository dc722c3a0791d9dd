"""
Logging configuration for g2kinetics

All loggers live under the 'g2kinetics.' namespace. Console output goes to
stderr so command results printed on stdout stay machine-readable; the
rotating files keep a full DEBUG trace plus a separate errors-only log.
"""

import logging
import logging.handlers
import os
import sys
from typing import Dict, Optional

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
LOGS_DIR = os.path.join(PROJECT_ROOT, 'logs')

LOGGER_NAMESPACE = 'g2kinetics'

FILE_FORMAT = '%(asctime)s | %(name)s | %(levelname)s | %(threadName)s | %(funcName)s:%(lineno)d | %(message)s'
CONSOLE_FORMAT = '%(asctime)s | %(levelname)s | %(name)s | %(message)s'


class ColoredFormatter(logging.Formatter):
    """Level-coloured console formatter"""

    COLORS = {
        'DEBUG': '\033[36m',
        'INFO': '\033[32m',
        'WARNING': '\033[33m',
        'ERROR': '\033[31m',
        'CRITICAL': '\033[35m',
    }
    RESET = '\033[0m'

    def format(self, record):
        # Work on a copy; the file handlers share the record
        record = logging.makeLogRecord(record.__dict__)
        record.levelname = f"{self.COLORS.get(record.levelname, '')}{record.levelname}{self.RESET}"
        record.name = record.name.replace(f'{LOGGER_NAMESPACE}.', '', 1)
        return super().format(record)


def _rotating_handler(path: str, level: int, max_bytes: int, backups: int) -> logging.Handler:
    handler = logging.handlers.RotatingFileHandler(path, maxBytes=max_bytes, backupCount=backups, encoding='utf-8')
    handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
    handler.setLevel(level)
    return handler


class KineticsLogger:
    """Process-wide logging setup and the shared audit records"""

    _initialized = False
    _loggers: Dict[str, logging.Logger] = {}

    @classmethod
    def setup_logging(cls,
                      log_level: str = 'INFO',
                      enable_file_logging: bool = True,
                      enable_console_logging: bool = True,
                      max_file_size: int = 10 * 1024 * 1024,
                      backup_count: int = 5,
                      log_dir: Optional[str] = None) -> None:
        """
        Attach handlers to the package logger (idempotent)

        Args:
            log_level: Console and package level name
            enable_file_logging: Write g2kinetics.log and g2kinetics_errors.log
            enable_console_logging: Coloured output on stderr
            max_file_size: Bytes before a log file rotates
            backup_count: Rotated files kept
            log_dir: Directory for log files (defaults to <project>/logs)
        """
        if cls._initialized:
            return

        level = getattr(logging, log_level.upper())
        package_logger = logging.getLogger(LOGGER_NAMESPACE)
        package_logger.setLevel(level)
        package_logger.handlers.clear()
        package_logger.propagate = False

        log_dir = log_dir or LOGS_DIR
        if enable_file_logging:
            try:
                os.makedirs(log_dir, exist_ok=True)
                package_logger.addHandler(_rotating_handler(
                    os.path.join(log_dir, 'g2kinetics.log'), logging.DEBUG, max_file_size, backup_count))
                package_logger.addHandler(_rotating_handler(
                    os.path.join(log_dir, 'g2kinetics_errors.log'), logging.ERROR, max_file_size, backup_count))
            except OSError as e:
                sys.stderr.write(f"Warning: file logging disabled, cannot use {log_dir}: {e}\n")
                enable_file_logging = False

        if enable_console_logging:
            console = logging.StreamHandler(sys.stderr)
            console.setFormatter(ColoredFormatter(CONSOLE_FORMAT, datefmt='%H:%M:%S'))
            console.setLevel(level)
            package_logger.addHandler(console)

        cls._initialized = True
        cls.get_logger('system').info(
            f"Logging initialized - level {log_level}, file {enable_file_logging}, console {enable_console_logging}")

    @classmethod
    def get_logger(cls, name: str) -> logging.Logger:
        if name not in cls._loggers:
            cls._loggers[name] = logging.getLogger(f'{LOGGER_NAMESPACE}.{name}')
        return cls._loggers[name]

    @classmethod
    def log_command(cls, command: str, arguments: Optional[str] = None) -> None:
        """Audit record of the CLI invocation"""
        message = f"COMMAND: {command}"
        if arguments:
            message += f" | {arguments}"
        cls.get_logger('commands').info(message)

    @classmethod
    def log_data_processing(cls, stage: str, count: int, duration: float, success: bool) -> None:
        """One line per bulk stage: events simulated, events correlated, bins fitted"""
        logger = cls.get_logger('data')
        rate = f" | {count / duration:.3g}/s" if duration > 0 and count else ""
        message = f"{stage} | {count} items | {duration:.2f}s{rate} | {'SUCCESS' if success else 'FAILED'}"
        if success:
            logger.info(message)
        else:
            logger.error(message)


def get_logger(name: str) -> logging.Logger:
    return KineticsLogger.get_logger(name)
