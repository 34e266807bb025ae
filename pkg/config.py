"""
Runtime settings for steerlab.
Values come from the environment (optionally via a .env file) with safe defaults.
"""

import os
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

DEFAULT_ENUM_CAP = 1_000_000
DEFAULT_MC_CHUNK = 10_000


def _positive_int(name, default):
    """Read a positive integer setting, falling back to the default on bad input."""
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logging.warning(f"Ignoring {name}={raw!r}: not an integer. Using default {default}.")
        return default
    if value < 1:
        logging.warning(f"Ignoring {name}={raw!r}: must be >= 1. Using default {default}.")
        return default
    return value


def worker_count():
    """Maximum number of worker threads for parallel reductions."""
    return _positive_int("STEERLAB_THREADS", max(os.cpu_count() or 1, 1))


def enumeration_cap():
    """Largest number of deterministic assignments nst_enumerate will visit."""
    return _positive_int("STEERLAB_ENUM_CAP", DEFAULT_ENUM_CAP)


def mc_chunk_size():
    """Samples per RNG chunk; fixes the chunk layout independently of the worker count."""
    return _positive_int("STEERLAB_MC_CHUNK", DEFAULT_MC_CHUNK)


def log_level():
    level = os.environ.get("STEERLAB_LOG_LEVEL", "INFO").upper()
    if level not in logging.getLevelNamesMapping():
        logging.warning(f"Unknown STEERLAB_LOG_LEVEL {level!r}, falling back to INFO")
        return "INFO"
    return level


def ledger_path():
    """Path of the sqlite run ledger, or None when recording is disabled."""
    path = os.environ.get("STEERLAB_LEDGER", "").strip()
    return path or None
