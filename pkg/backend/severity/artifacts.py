"""
Atomic JSON/CSV writers shared by the dataset writer, reports and commands.

Files are written to a temporary sibling and renamed into place, so a reader
never observes a half-written artifact.
"""

import json
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from . import errors

logger = logging.getLogger(__name__)


def sig6(value):
    """Round to 6 significant digits; NaN and infinities become None"""
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        return None
    return float(f"{value:.6g}")


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.info("Wrote %s", path)
    return path


def write_json(path, document):
    text = json.dumps(to_jsonable(document), indent=2, allow_nan=False) + "\n"
    return write_text(path, text)


def write_frame(path, frame, float_format=None):
    """Write a pandas DataFrame as LF-terminated CSV"""
    text = frame.to_csv(index=False, lineterminator="\n", float_format=float_format)
    return write_text(path, text)


def read_json(path):
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise errors.UnreadableFile(path, exc) from exc
