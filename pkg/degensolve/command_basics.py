"""Command-line basic functions"""

import os
import pathlib
from typing import Dict

from degensolve.basics import ValidationError

THREADS_NAME = "DEGENSOLVE_THREADS"

OUT_NAME = "DEGENSOLVE_OUT"

# Output directory when none is given
DEFAULT_OUT = "degensolve-out"


def read_env_file(path: pathlib.Path = pathlib.Path(".env")) -> Dict[str, str]:
    """Read .env file"""
    values = {}
    if path.exists():
        with path.open(encoding="utf-8") as f:
            for line in f:
                if line.lstrip().startswith("#"):
                    continue
                k, sep, v = line.partition("=")
                if sep:
                    values[k.strip()] = v.strip()
    return values


def get_setting(name: str, default: str = "") -> str:
    """Get setting from environment or .env file"""
    value = os.environ.get(name, "").strip()
    if value:
        return value
    return read_env_file().get(name, default)


def default_threads() -> int:
    """Worker count for sweeps"""
    v = get_setting(THREADS_NAME, "1")
    try:
        n = int(v)
    except ValueError:
        raise ValidationError(f"{THREADS_NAME}={v!r} is not an integer") from None
    if n < 1:
        raise ValidationError(f"{THREADS_NAME}={n} below 1")
    return n


def default_out() -> str:
    """Output directory"""
    return get_setting(OUT_NAME, DEFAULT_OUT)
