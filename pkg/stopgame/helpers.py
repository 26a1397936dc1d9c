"""Various helper functions implemented by stopgame."""
import os
import json
import math
import logging
from typing import Any, Dict, Optional

import numpy as np

from stopgame.exceptions import StopGameError


logger = logging.getLogger(__name__)

FLOAT_DIGITS = 12
THREADS_ENV = "STOPGAME_THREADS"


def format_float(x: float, digits: int = FLOAT_DIGITS) -> Optional[float]:
    """Round a float to a fixed number of significant digits.
    :param float x: Value to round.
    :param int digits: Significant digits to keep.
    :rtype: float or None
    :returns: The rounded value, or None for NaN and infinities
        (which JSON cannot carry).
    """
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{digits}g}")


def to_plain(obj: Any) -> Any:
    """Convert numpy containers and scalars into JSON-ready python objects,
    with every float rounded by :func:`format_float`.
    """
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return [to_plain(v) for v in sorted(obj)]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    return obj


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and fixed float formatting so that
    identical runs produce byte-identical documents.
    """
    return json.dumps(to_plain(obj), sort_keys=True, indent=2) + "\n"


def target_directory(output_path: Optional[str] = None) -> str:
    """Function to determine the target directory for artifacts.
    Returns absolute path (if relative) or current path (if none).
    Creates a directory if it does not exist.
    :type output_path: str
    :rtype: str
    :return: Absolute path to the directory as a string.
    """
    if output_path:
        if not os.path.isabs(output_path):
            output_path = os.path.join(os.getcwd(), output_path)
    else:
        output_path = os.getcwd()
    os.makedirs(output_path, exist_ok=True)
    return output_path


def thread_count() -> int:
    """Number of worker threads allowed by ``STOPGAME_THREADS``.
    :rtype: int
    :returns: A positive integer, 1 when unset or invalid.
    """
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1
    if value < 1:
        logger.warning("ignoring non-positive %s=%r", THREADS_ENV, raw)
        return 1
    return value


def errors_as_dict(exc: BaseException) -> Dict[str, Any]:
    """Render an exception as the CLI's machine-readable error record."""
    record: Dict[str, Any] = {
        "error": type(exc).__name__,
        "message": str(exc),
    }
    if isinstance(exc, StopGameError):
        record.update(exc.context())
    return record


def setup_logger(level: int = logging.ERROR,
                 log_filename: Optional[str] = None) -> None:
    """Create a configured instance of logger.
    :param int level: Describe the severity level of the logs to handle.
    :param str log_filename: (Optional) Also write records to this file.
    """
    fmt = "[%(asctime)s] %(levelname)s in %(module)s: %(message)s"
    date_fmt = "%H:%M:%S"
    formatter = logging.Formatter(fmt, datefmt=date_fmt)

    logger = logging.getLogger("stopgame")
    logger.setLevel(level)

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    if log_filename is not None:
        file_handler = logging.FileHandler(log_filename)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
