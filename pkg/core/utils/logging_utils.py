"""Logging utilities for caption engine runs."""

import logging
import sys
from pathlib import Path
from typing import Optional

ROOT_LOGGER_NAME = "caption_engine"


def setup_logger(
    name: str = ROOT_LOGGER_NAME,
    output_dir: Optional[Path] = None,
    level: str = "INFO",
    filename: str = "run.log",
) -> logging.Logger:
    """Setup logger with console and (optionally) file handlers."""
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    logger.propagate = False

    # Clear existing handlers
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    # Console handler; stderr keeps stdout free for primary outputs
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logger.level)
    console_formatter = logging.Formatter("%(asctime)s | %(levelname)s | %(message)s")
    console_handler.setFormatter(console_formatter)
    logger.addHandler(console_handler)

    # File handler
    if output_dir is not None:
        output_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(output_dir / filename, encoding="utf-8")
        file_handler.setLevel(logger.level)
        file_handler.setFormatter(console_formatter)
        logger.addHandler(file_handler)

    return logger


def get_logger(module_name: str) -> logging.Logger:
    """Child of the caption engine root logger for a library module."""
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{module_name}")
