"""
Retrieval metrics over a ScoreMatrix, and score matrices built from a model.

Rank of a row's ground truth = 1 + (columns scoring strictly higher) + (columns
scoring equally with a lower index).
"""

from typing import Sequence, Tuple

import numpy as np

from captioner.models import Parameters
from captioner.network import sequence_log_prob
from core.exceptions import InvalidInputError
from core.utils.logging_utils import get_logger
from dataset.models import TrainingExample
from metrics.models import ScoreMatrix

logger = get_logger(__name__)


def ground_truth_ranks(matrix: ScoreMatrix) -> np.ndarray:
    rows = np.arange(matrix.rows)
    truth_scores = matrix.scores[rows, matrix.ground_truth][:, None]
    columns = np.arange(matrix.cols)[None, :]
    higher = matrix.scores > truth_scores
    tied_before = (matrix.scores == truth_scores) & (columns < matrix.ground_truth[:, None])
    return 1 + np.sum(higher | tied_before, axis=1)


def recall_at_k(matrix: ScoreMatrix, k: int) -> float:
    if not 1 <= k <= matrix.cols:
        raise InvalidInputError(f"k must be in [1, {matrix.cols}] (got {k})")
    return float(np.mean(ground_truth_ranks(matrix) <= k))


def median_rank(matrix: ScoreMatrix) -> float:
    """Median ground-truth rank; the lower middle value for an even row count."""
    ranks = np.sort(ground_truth_ranks(matrix))
    return float(ranks[(len(ranks) - 1) // 2])


def log_prob_table(
    images: Sequence[TrainingExample],
    captions: Sequence[TrainingExample],
    params: Parameters,
) -> np.ndarray:
    """table[i, j] = log p(captions[j] | images[i])."""
    table = np.empty((len(images), len(captions)), dtype=np.float64)
    for i, image in enumerate(images):
        features = image.feature_vector
        for j, caption in enumerate(captions):
            table[i, j] = sequence_log_prob(features, caption.tokens, params)
    logger.debug(f"Scored {table.size} image/caption pairs")
    return table


def _word_counts(captions: Sequence[TrainingExample]) -> np.ndarray:
    # Predicted words = every token after START, STOP included
    return np.array([len(caption.tokens) - 1 for caption in captions], dtype=np.float64)


def annotation_matrix(
    table: np.ndarray,
    captions: Sequence[TrainingExample],
    normalize: bool = True,
) -> ScoreMatrix:
    """Rows are images ranking every candidate caption; image i's truth is caption i."""
    scores = table / _word_counts(captions)[None, :] if normalize else table
    ids = tuple(caption.image_id for caption in captions)
    return ScoreMatrix(scores, np.arange(table.shape[0]), row_ids=ids, col_ids=ids)


def search_matrix(
    table: np.ndarray,
    captions: Sequence[TrainingExample],
    normalize: bool = False,
) -> ScoreMatrix:
    """Rows are captions ranking every image; caption j's truth is image j."""
    scores = table.T / _word_counts(captions)[:, None] if normalize else table.T
    ids = tuple(caption.image_id for caption in captions)
    return ScoreMatrix(scores, np.arange(table.shape[1]), row_ids=ids, col_ids=ids)


def first_caption_per_image(examples: Sequence[TrainingExample]) -> Tuple[TrainingExample, ...]:
    """One (image, caption) example per image_id, in first-seen order."""
    seen = set()
    chosen = []
    for example in examples:
        if example.image_id not in seen:
            seen.add(example.image_id)
            chosen.append(example)
    return tuple(chosen)


def ranking_report(matrix: ScoreMatrix, ks: Sequence[int] = (1, 10)) -> dict:
    """{"r@1": ..., "r@10": ..., "medr": ...} with every k clipped to the column count."""
    report = {f"r@{k}": recall_at_k(matrix, min(k, matrix.cols)) for k in ks}
    report["medr"] = median_rank(matrix)
    return report
