import os
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

_logging_configured = False


def get_thread_cap() -> int:
    """Parallel width for multistart solves (SCHRO_BRANCH_THREADS, default 1)"""
    raw = os.getenv("SCHRO_BRANCH_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"SCHRO_BRANCH_THREADS must be an integer, got '{raw}'")
    return max(1, value)


def get_default_seed() -> int:
    raw = os.getenv("SCHRO_BRANCH_SEED", "42")
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"SCHRO_BRANCH_SEED must be an integer, got '{raw}'")


def get_output_dir() -> str:
    return os.getenv("SCHRO_BRANCH_OUTPUT_DIR", "output")


def configure_logging(level: str = None):
    """
    Configure root logging once for the entry points (CLI and API).

    Args:
        level: Logging level name; defaults to SCHRO_BRANCH_LOG_LEVEL or INFO
    """
    global _logging_configured
    if _logging_configured:
        return
    level_name = (level or os.getenv("SCHRO_BRANCH_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    _logging_configured = True
