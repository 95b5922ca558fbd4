"""
Main entry point for the OSSDM semantic waveform simulator
"""
import logging
import sys

import config
from commands import process_command
from errors import OssdmError

# Configure logging
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stdout),
        logging.FileHandler(config.LOG_FILE, encoding='utf-8')
    ]
)
logger = logging.getLogger('ossdm')


def main(argv=None) -> int:
    """Run one CLI command and map failures to their exit category"""
    try:
        return process_command(argv)
    except OssdmError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Interrupted by user.")
        return config.EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return config.EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
