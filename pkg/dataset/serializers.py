"""Line-delimited JSON dataset files."""

from pathlib import Path

import orjson
from pydantic import ValidationError

from core.exceptions import InvalidInputError, ParseError, SchemaError
from core.utils.file_utils import ensure_dir
from core.utils.logging_utils import get_logger
from dataset.models import CaptionDataset, CaptionRecord

logger = get_logger(__name__)


def _describe(exc: ValidationError) -> str:
    first = exc.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "record"
    return f"{location}: {first['msg']}"


def load_dataset(path: Path, require_captions: bool = True) -> CaptionDataset:
    """
    Read a dataset file: one JSON object per line with `image_id`, `features`
    and `captions`. Blank lines are skipped. The feature dimension is taken from
    the first record and enforced on the rest.
    """
    path = Path(path)
    records = []
    feature_dim = None
    seen_ids = set()

    with open(path, "rb") as handle:
        for line_number, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                payload = orjson.loads(raw)
            except orjson.JSONDecodeError as exc:
                raise ParseError(line_number, f"invalid JSON ({exc})") from exc
            if not isinstance(payload, dict):
                raise ParseError(line_number, "expected a JSON object")

            try:
                record = CaptionRecord.model_validate(payload)
            except ValidationError as exc:
                raise SchemaError(_describe(exc), line_number) from exc

            if require_captions and not record.captions:
                raise SchemaError("record has no captions", line_number)
            if feature_dim is None:
                feature_dim = len(record.features)
            elif len(record.features) != feature_dim:
                raise SchemaError(
                    f"features have dim {len(record.features)}, expected {feature_dim}", line_number
                )
            if record.image_id in seen_ids:
                raise SchemaError(f"duplicate image_id {record.image_id!r}", line_number)
            seen_ids.add(record.image_id)
            records.append(record)

    if not records:
        raise InvalidInputError(f"Dataset file {path} contains no records")

    logger.info(f"Loaded {len(records)} records (feature_dim={feature_dim}) from {path}")
    return CaptionDataset(records=tuple(records), feature_dim=feature_dim)


def write_dataset(dataset: CaptionDataset, path: Path) -> None:
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "wb") as handle:
        for record in dataset.records:
            handle.write(orjson.dumps(record.model_dump(mode="json")))
            handle.write(b"\n")
    logger.info(f"Wrote {len(dataset)} records to {path}")
