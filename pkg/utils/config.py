# utils/config.py
"""
Configuration management for g2kinetics
Process-level settings from environment variables (optionally a .env file)
"""

import os

# Load a .env file from the project root if python-dotenv is available
try:
    from dotenv import load_dotenv
    env_file = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), '.env')
    if os.path.exists(env_file):
        load_dotenv(env_file)
except ImportError:
    pass


def _get_bool(key: str, default: bool = False) -> bool:
    """Helper to parse boolean environment variables"""
    return os.getenv(key, str(default)).lower() in ('true', '1', 'yes', 'on')


def _get_int(key: str, default: int) -> int:
    """Helper to parse integer environment variables"""
    try:
        return int(os.getenv(key, str(default)))
    except ValueError:
        return default


def _get_float(key: str, default: float) -> float:
    """Helper to parse float environment variables"""
    try:
        return float(os.getenv(key, str(default)))
    except ValueError:
        return default


class Config:
    """Settings loaded from environment variables"""

    APP_NAME = "g2kinetics"
    APP_VERSION = "1.0.0"

    # ============================================================================
    # LOGGING CONFIGURATION
    # ============================================================================

    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()
    ENABLE_FILE_LOGGING = _get_bool('ENABLE_FILE_LOGGING', True)
    ENABLE_CONSOLE_LOGGING = _get_bool('ENABLE_CONSOLE_LOGGING', True)
    LOG_DIR = os.getenv('LOG_DIR', '')
    MAX_LOG_FILE_SIZE = _get_int('MAX_LOG_FILE_SIZE', 10485760)  # 10MB
    LOG_BACKUP_COUNT = _get_int('LOG_BACKUP_COUNT', 5)
    ENABLE_PERFORMANCE_LOGGING = _get_bool('ENABLE_PERFORMANCE_LOGGING', False)

    # ============================================================================
    # SIMULATION
    # ============================================================================

    # Upper bound on events materialized by simulate_events
    MAX_EVENTS_IN_MEMORY = _get_int('MAX_EVENTS_IN_MEMORY', 50_000_000)
    SIM_BLOCK_DURATION_S = _get_float('SIM_BLOCK_DURATION_S', 1.0)
    DEFAULT_TIMESTAMP_RESOLUTION_NS = _get_float('DEFAULT_TIMESTAMP_RESOLUTION_NS', 0.1)

    # ============================================================================
    # CORRELATION AND FITTING
    # ============================================================================

    DEFAULT_BIN_WIDTH_NS = _get_float('DEFAULT_BIN_WIDTH_NS', 1.0)
    DEFAULT_WINDOW_NS = _get_float('DEFAULT_WINDOW_NS', 1000.0)
    FIT_MAX_ITERATIONS = _get_int('FIT_MAX_ITERATIONS', 200)

    # ============================================================================
    # CONCURRENCY
    # ============================================================================

    MAX_WORKERS = _get_int('MAX_WORKERS', 4)


def get_validation_details() -> dict:
    """Get detailed validation results with categorization"""
    errors = []
    warnings = []

    valid_log_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
    if Config.LOG_LEVEL not in valid_log_levels:
        errors.append(f"LOG_LEVEL ({Config.LOG_LEVEL}) must be one of: {valid_log_levels}")

    if Config.MAX_LOG_FILE_SIZE < 1024 * 1024:
        warnings.append(f"MAX_LOG_FILE_SIZE ({Config.MAX_LOG_FILE_SIZE}) is very small (1MB+ recommended)")

    if Config.MAX_EVENTS_IN_MEMORY < 1000:
        errors.append(f"MAX_EVENTS_IN_MEMORY ({Config.MAX_EVENTS_IN_MEMORY}) must be at least 1000")

    if Config.SIM_BLOCK_DURATION_S <= 0:
        errors.append(f"SIM_BLOCK_DURATION_S ({Config.SIM_BLOCK_DURATION_S}) must be positive")

    if Config.DEFAULT_TIMESTAMP_RESOLUTION_NS <= 0:
        errors.append("DEFAULT_TIMESTAMP_RESOLUTION_NS must be positive")
    elif Config.DEFAULT_TIMESTAMP_RESOLUTION_NS > 1.16:
        warnings.append("DEFAULT_TIMESTAMP_RESOLUTION_NS is coarser than a tenth of the radiative lifetime")

    if Config.DEFAULT_BIN_WIDTH_NS <= 0 or Config.DEFAULT_WINDOW_NS <= 0:
        errors.append("DEFAULT_BIN_WIDTH_NS and DEFAULT_WINDOW_NS must be positive")

    if Config.FIT_MAX_ITERATIONS < 10:
        errors.append(f"FIT_MAX_ITERATIONS ({Config.FIT_MAX_ITERATIONS}) must be at least 10")

    if Config.MAX_WORKERS < 1:
        errors.append(f"MAX_WORKERS ({Config.MAX_WORKERS}) must be at least 1")
    elif Config.MAX_WORKERS > 64:
        warnings.append(f"MAX_WORKERS ({Config.MAX_WORKERS}) seems unusual (1-64 recommended)")

    return {
        'errors': errors,
        'warnings': warnings,
        'has_errors': len(errors) > 0,
        'has_warnings': len(warnings) > 0,
        'is_valid': len(errors) == 0
    }


def get_config_summary() -> dict:
    """Get a summary of the current configuration"""
    return {
        'log_level': Config.LOG_LEVEL,
        'file_logging': Config.ENABLE_FILE_LOGGING,
        'console_logging': Config.ENABLE_CONSOLE_LOGGING,
        'max_events_in_memory': Config.MAX_EVENTS_IN_MEMORY,
        'sim_block_duration_s': Config.SIM_BLOCK_DURATION_S,
        'timestamp_resolution_ns': Config.DEFAULT_TIMESTAMP_RESOLUTION_NS,
        'bin_width_ns': Config.DEFAULT_BIN_WIDTH_NS,
        'window_ns': Config.DEFAULT_WINDOW_NS,
        'fit_max_iterations': Config.FIT_MAX_ITERATIONS,
        'max_workers': Config.MAX_WORKERS,
        'performance_logging': Config.ENABLE_PERFORMANCE_LOGGING,
    }


def initialize_logging():
    """Initialize logging system with current configuration"""
    from utils.logging_config import KineticsLogger

    KineticsLogger.setup_logging(
        log_level=Config.LOG_LEVEL,
        enable_file_logging=Config.ENABLE_FILE_LOGGING,
        enable_console_logging=Config.ENABLE_CONSOLE_LOGGING,
        max_file_size=Config.MAX_LOG_FILE_SIZE,
        backup_count=Config.LOG_BACKUP_COUNT,
        log_dir=Config.LOG_DIR or None
    )
