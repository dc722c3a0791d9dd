# main.py
"""
g2kinetics - Main Entry Point
Initializes configuration and logging, then dispatches a CLI command
"""

import sys
import os

# Add project root to Python path
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)


def main(argv=None):
    """Main entry point for g2kinetics"""
    try:
        # Step 1: Initialize configuration and logging
        try:
            from utils.config import initialize_logging
            initialize_logging()

            from utils.logging_config import get_logger
            logger = get_logger('main')
        except ImportError as e:
            print(f"Failed to import configuration modules: {e}", file=sys.stderr)
            print("Please ensure all dependencies are installed: pip install -r requirements.txt", file=sys.stderr)
            return 1
        except Exception as e:
            print(f"Failed to initialize logging: {e}", file=sys.stderr)
            print("Continuing without structured logging...", file=sys.stderr)
            logger = None

        def log_or_print(message):
            """Log message if logger available, otherwise print"""
            if logger:
                logger.debug(message)
            else:
                print(message, file=sys.stderr)

        # Step 2: Run the command
        from utils.config import Config, get_config_summary
        from cli.commands import run

        log_or_print(f"Starting {Config.APP_NAME} {Config.APP_VERSION}")
        log_or_print(f"Configuration: {get_config_summary()}")
        exit_code = run(argv)
        log_or_print(f"{Config.APP_NAME} finished with exit code {exit_code}")
        return exit_code

    except KeyboardInterrupt:
        print("\nCancelled by user.", file=sys.stderr)
        return 130

    except ImportError as e:
        print(f"Import Error: {e}", file=sys.stderr)
        print("\nPlease ensure all dependencies are installed:", file=sys.stderr)
        print("pip install -r requirements.txt", file=sys.stderr)
        return 1

    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    exit_code = main()
    sys.exit(exit_code)
