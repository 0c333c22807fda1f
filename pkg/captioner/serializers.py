"""
Checkpoint container.

Layout (all integers little-endian):

    b"NICKPT1\\n"                      magic
    uint64                            header length in bytes
    header                            orjson object:
                                        {"format_version": 1,
                                         "dims": {feature_dim, embed_dim, hidden_dim, vocab_size},
                                         "vocab_hash": "<sha256 hex>",
                                         "matrices": [{"name", "rows", "cols"}, ...]}
    payload                           each matrix in header order, row-major float64

The file holds no timestamps: identical parameters serialize to identical bytes.
"""

from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import orjson

from captioner.models import Dims, Parameters
from core.exceptions import CheckpointError, InvalidConfigError, ShapeError
from core.utils.file_utils import ensure_dir
from core.utils.logging_utils import get_logger
from dataset.vocabulary import Vocabulary

logger = get_logger(__name__)

MAGIC = b"NICKPT1\n"
FORMAT_VERSION = 1
_FLOAT = np.dtype("<f8")


def checkpoint_bytes(params: Parameters, vocab_hash: str) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "dims": params.dims.to_dict(),
        "vocab_hash": vocab_hash,
        "matrices": [
            {"name": name, "rows": int(matrix.shape[0]), "cols": int(matrix.shape[1])}
            for name, matrix in params.items()
        ],
    }
    header_bytes = orjson.dumps(header, option=orjson.OPT_SORT_KEYS)
    parts = [MAGIC, len(header_bytes).to_bytes(8, "little"), header_bytes]
    for _, matrix in params.items():
        parts.append(np.ascontiguousarray(matrix, dtype=_FLOAT).tobytes(order="C"))
    return b"".join(parts)


def save_checkpoint(params: Parameters, vocab: Vocabulary, path: Path) -> None:
    if params.dims.vocab_size != vocab.size:
        raise CheckpointError(
            f"Parameters are sized for {params.dims.vocab_size} tokens, vocabulary has {vocab.size}"
        )
    path = Path(path)
    ensure_dir(path.parent)
    path.write_bytes(checkpoint_bytes(params, vocab.content_hash))
    logger.info(f"Saved checkpoint to {path}")


def _read_header(header) -> Tuple[Dims, List[Tuple[str, int, int]], str]:
    if not isinstance(header, dict):
        raise CheckpointError("Checkpoint header is not a JSON object")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {header.get('format_version')!r}")

    try:
        dims = Dims(**header["dims"])
    except (InvalidConfigError, KeyError, TypeError) as exc:
        raise CheckpointError(f"Invalid dims in checkpoint: {exc}") from exc

    try:
        layout = [
            (str(entry["name"]), int(entry["rows"]), int(entry["cols"]))
            for entry in header["matrices"]
        ]
        vocab_hash = header["vocab_hash"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"Malformed checkpoint header: {exc!r}") from exc
    if not isinstance(vocab_hash, str):
        raise CheckpointError("Checkpoint vocabulary hash is not a string")
    if any(rows < 0 or cols < 0 for _, rows, cols in layout):
        raise CheckpointError("Negative matrix shape in checkpoint header")
    return dims, layout, vocab_hash


def parse_checkpoint(blob: bytes) -> Tuple[Parameters, str]:
    """Decode a checkpoint into (parameters, vocabulary hash)."""
    if not blob.startswith(MAGIC):
        raise CheckpointError("Not a checkpoint file (bad magic)")
    offset = len(MAGIC)
    if len(blob) < offset + 8:
        raise CheckpointError("Truncated checkpoint header")
    header_length = int.from_bytes(blob[offset:offset + 8], "little")
    offset += 8
    try:
        header = orjson.loads(blob[offset:offset + header_length])
    except orjson.JSONDecodeError as exc:
        raise CheckpointError(f"Corrupt checkpoint header ({exc})") from exc
    offset += header_length
    dims, layout, vocab_hash = _read_header(header)

    matrices = {}
    for name, rows, cols in layout:
        size = rows * cols * _FLOAT.itemsize
        if len(blob) < offset + size:
            raise CheckpointError(f"Truncated payload for {name}")
        flat = np.frombuffer(blob, dtype=_FLOAT, count=rows * cols, offset=offset)
        matrices[name] = flat.reshape(rows, cols).astype(np.float64)
        offset += size
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes after payload")

    try:
        params = Parameters.from_mapping(dims, matrices)
    except (KeyError, ShapeError) as exc:
        raise CheckpointError(f"Checkpoint matrices do not match dims: {exc}") from exc
    if not params.is_finite():
        raise CheckpointError("Checkpoint contains non-finite weights")
    return params, vocab_hash


def load_checkpoint(path: Path, vocab: Optional[Vocabulary] = None) -> Parameters:
    """Load parameters, refusing a checkpoint trained against a different vocabulary."""
    params, vocab_hash = parse_checkpoint(Path(path).read_bytes())
    if vocab is not None and vocab_hash != vocab.content_hash:
        raise CheckpointError(
            f"Checkpoint {path} was trained against vocabulary {vocab_hash[:12]}, "
            f"not {vocab.content_hash[:12]}"
        )
    logger.info(f"Loaded checkpoint {path} ({params.dims})")
    return params


def vocab_path_for(checkpoint_path: Path) -> Path:
    """Vocabulary file stored next to a checkpoint."""
    checkpoint_path = Path(checkpoint_path)
    return checkpoint_path.with_name(checkpoint_path.name + ".vocab")
