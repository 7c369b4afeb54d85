import logging
import os
import re
from typing import Any

DEFAULT_LOGLEVEL = logging.WARNING
_LOG_FORMAT = '%(asctime)s - [%(name)s, %(levelname)s] %(message)s'
_UNSAFE_IDENTIFIER_CHARS = re.compile(r"[^A-Za-z0-9_.()\-]+")


def configure_logger(name: str, log_level: int = DEFAULT_LOGLEVEL) -> logging.Logger:
    """
    Returns the named logger with its level set and a single stream handler attached.
    """
    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        logger.addHandler(handler)
    return logger


def create_local_file(output_dir: str = "", extension: str = "csv"):
    """
    Returns a callable opening `<output_dir>/<identifier>.<extension>` for writing.
    """

    def open_local_file(identifier: str):
        return open(
            f"{os.path.join(output_dir, identifier)}.{extension}",
            "w",
            newline="",
        )

    return open_local_file


def safe_identifier(*parts: Any) -> str:
    """
    Joins `parts` into a file-system safe identifier, e.g. `qafiro_mN-r(2)-H1_mu1`.
    """
    return "_".join(_UNSAFE_IDENTIFIER_CHARS.sub("-", str(part)) for part in parts)
