"""Nearest-neighbour queries over the learned word embeddings (columns of W_e)."""

import numpy as np

from captioner.models import Parameters
from core.exceptions import DegenerateEmbeddingError, InvalidInputError, ShapeError
from core.utils.logging_utils import get_logger
from dataset.vocabulary import NUM_RESERVED, Vocabulary
from embeddings.models import NeighborReport

logger = get_logger(__name__)


def cosine_similarities(params: Parameters, vocab: Vocabulary, token_id: int) -> np.ndarray:
    """Cosine similarity of every non-reserved column of W_e to column token_id."""
    embeddings = params.w_e
    norms = np.linalg.norm(embeddings, axis=0)
    for index in [token_id, *range(NUM_RESERVED, embeddings.shape[1])]:
        if norms[index] == 0.0:
            raise DegenerateEmbeddingError(vocab.token_of(index))
    similarities = (embeddings.T @ embeddings[:, token_id]) / (norms * norms[token_id])
    return np.clip(similarities, -1.0, 1.0)


def nearest_neighbors(word: str, k: int, params: Parameters, vocab: Vocabulary) -> NeighborReport:
    """
    Top-k words by cosine similarity to `word`, ties by ascending id.

    Reserved tokens and the query itself are never reported, so fewer than k
    neighbours come back when the vocabulary is that small.
    """
    if params.dims.vocab_size != vocab.size:
        raise ShapeError(
            f"Model vocabulary ({params.dims.vocab_size}) does not match vocabulary ({vocab.size})"
        )
    if not 1 <= k < vocab.size:
        raise InvalidInputError(f"k must be in [1, {vocab.size - 1}] (got {k})")
    query_id = vocab.lookup(word)

    similarities = cosine_similarities(params, vocab, query_id)
    candidates = np.array(
        [index for index in range(NUM_RESERVED, vocab.size) if index != query_id], dtype=np.int64
    )
    order = np.lexsort((candidates, -similarities[candidates]))
    chosen = candidates[order][:k]

    logger.debug(f"Neighbours of {word!r}: {len(chosen)} of {len(candidates)} candidates")
    return NeighborReport(
        query=word,
        neighbors=tuple(
            (vocab.token_of(int(index)), float(similarities[index])) for index in chosen
        ),
    )
