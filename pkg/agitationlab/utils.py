"""
Utility functions for agitationlab

Common helpers used across modules: atomic file writes, hashing and rounding.
"""

import hashlib
import json
import math
import os
import tempfile
from datetime import date
from enum import Enum
from pathlib import Path

FLOAT_FORMAT = '%.9g'


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves away from zero (Python's round() is banker's)"""
    return int(math.floor(value + 0.5)) if value >= 0 else -int(math.floor(-value + 0.5))


def atomic_write_text(path, text: str):
    """Write text to a temporary file next to `path`, then rename it into place"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _json_default(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (date, Path)):
        return str(value)
    if hasattr(value, 'tolist'):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def canonical_json(obj, indent=None) -> str:
    return json.dumps(obj, sort_keys=True, indent=indent, default=_json_default, allow_nan=False)


def atomic_write_json(path, obj):
    atomic_write_text(path, canonical_json(obj, indent=2) + '\n')


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a config mapping"""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()
