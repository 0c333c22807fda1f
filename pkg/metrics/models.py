from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from core.exceptions import InvalidInputError, ShapeError

MAX_REFERENCES = 5

Tokens = Tuple[str, ...]


@dataclass(frozen=True)
class EvalPair:
    """A generated caption and its 1-5 human references, all sentinel-free."""

    candidate: Tokens
    references: Tuple[Tokens, ...]
    allow_empty: bool = False

    def __post_init__(self):
        object.__setattr__(self, "candidate", tuple(self.candidate))
        references = tuple(tuple(reference) for reference in self.references)
        object.__setattr__(self, "references", references)
        if not 1 <= len(references) <= MAX_REFERENCES:
            raise InvalidInputError(
                f"Expected 1-{MAX_REFERENCES} references, got {len(references)}"
            )
        if not self.candidate and not self.allow_empty:
            raise InvalidInputError("Empty candidate (pass allow_empty=True to score it as 0)")


@dataclass(frozen=True)
class ScoreMatrix:
    """Query x candidate scores (higher is better) with each query's true candidate."""

    scores: np.ndarray
    ground_truth: np.ndarray
    row_ids: Optional[Tuple[str, ...]] = field(default=None)
    col_ids: Optional[Tuple[str, ...]] = field(default=None)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        truth = np.asarray(self.ground_truth, dtype=np.int64)
        if scores.ndim != 2 or scores.shape[0] == 0 or scores.shape[1] == 0:
            raise ShapeError(
                f"Score matrix must be a non-empty rectangle, got shape {scores.shape}"
            )
        if truth.shape != (scores.shape[0],):
            raise ShapeError(f"Need one ground-truth column per row, got {truth.shape}")
        if np.any(truth < 0) or np.any(truth >= scores.shape[1]):
            raise InvalidInputError("Ground-truth column index out of range")
        if np.any(np.isnan(scores)):
            raise InvalidInputError("Score matrix contains NaN")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "ground_truth", truth)

    @property
    def rows(self) -> int:
        return self.scores.shape[0]

    @property
    def cols(self) -> int:
        return self.scores.shape[1]
