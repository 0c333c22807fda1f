"""Score-matrix CSV files: header row of candidate ids, one row per query."""

from pathlib import Path

import numpy as np
import pandas as pd

from core.exceptions import SchemaError
from core.utils.file_utils import ensure_dir
from metrics.models import ScoreMatrix


def write_score_matrix(matrix: ScoreMatrix, path: Path) -> None:
    path = Path(path)
    ensure_dir(path.parent)
    frame = pd.DataFrame(
        matrix.scores,
        index=pd.Index(matrix.row_ids or range(matrix.rows), name="query"),
        columns=list(matrix.col_ids or range(matrix.cols)),
    )
    frame.to_csv(path, float_format="%.17g", lineterminator="\n")


def read_score_matrix(path: Path) -> ScoreMatrix:
    """Read a matrix back; each query's ground truth is the column carrying its id."""
    frame = pd.read_csv(path, index_col=0, dtype={"query": str})
    frame.columns = frame.columns.astype(str)
    row_ids = tuple(str(row_id) for row_id in frame.index)
    col_ids = tuple(frame.columns)
    positions = {col_id: index for index, col_id in enumerate(col_ids)}
    missing = [row_id for row_id in row_ids if row_id not in positions]
    if missing:
        raise SchemaError(f"{path}: no candidate column for queries {missing[:3]}")
    truth = np.array([positions[row_id] for row_id in row_ids], dtype=np.int64)
    return ScoreMatrix(frame.to_numpy(dtype=np.float64), truth, row_ids=row_ids, col_ids=col_ids)
