"""File system utilities."""

import hashlib
from pathlib import Path
from typing import Any

import orjson


def ensure_dir(path: Path) -> None:
    """Create directory if it doesn't exist."""
    path.mkdir(parents=True, exist_ok=True)


def save_json(data: Any, file_path: Path) -> None:
    """Save data as JSON file with proper formatting."""
    ensure_dir(file_path.parent)
    file_path.write_bytes(orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))


def load_json(file_path: Path) -> Any:
    """Load a JSON document."""
    return orjson.loads(file_path.read_bytes())


def write_text(text: str, file_path: Path) -> None:
    """Write UTF-8 text with Unix newlines, creating parent directories."""
    ensure_dir(file_path.parent)
    with open(file_path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


def sha256_file(file_path: Path) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(file_path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()
