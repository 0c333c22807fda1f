import math
from typing import Iterable, Sequence

from core.exceptions import InvalidInputError
from metrics.bleu import corpus_bleu

Tokens = Sequence[str]

HUMAN_GROUP_SIZE = 5


def perplexity(total_log_prob: float, word_count: int) -> float:
    """Geometric mean of the inverse probability of each predicted word."""
    if word_count < 1:
        raise InvalidInputError(f"Perplexity needs at least one word (got {word_count})")
    if total_log_prob > 0.0:
        raise InvalidInputError(f"Total log-probability must be <= 0 (got {total_log_prob!r})")
    return math.exp(-total_log_prob / word_count)


def _leave_one_out_bleu(groups: Sequence[Sequence[Tokens]], max_n: int) -> float:
    """Hold out position h of every group, score against the rest, average over h."""
    width = len(groups[0])
    scores = []
    for held_out in range(width):
        candidates = [group[held_out] for group in groups]
        references = [
            [ref for index, ref in enumerate(group) if index != held_out] for group in groups
        ]
        scores.append(corpus_bleu(candidates, references, max_n))
    return sum(scores) / width


def human_baseline_bleu(reference_sets: Sequence[Sequence[Tokens]], max_n: int = 4) -> float:
    """
    BLEU of human captions scored like a model.

    Each of the five references of every group is in turn the candidate
    against the other four; the five corpus BLEUs are averaged.
    """
    if not reference_sets:
        raise InvalidInputError("Human baseline of an empty corpus")
    for index, group in enumerate(reference_sets):
        if len(group) != HUMAN_GROUP_SIZE:
            raise InvalidInputError(
                f"Group {index} has {len(group)} references; "
                f"the human baseline needs exactly {HUMAN_GROUP_SIZE}"
            )
    return _leave_one_out_bleu(reference_sets, max_n)


def nbest_agreement_bleu(nbest_lists: Sequence[Sequence[Tokens]], max_n: int = 4) -> float:
    """
    Leave-one-out BLEU among each image's N-best captions.

    High values mean the beam returns near-duplicates. Every list must have
    the same length N >= 2.
    """
    if not nbest_lists:
        raise InvalidInputError("Agreement of an empty corpus")
    width = len(nbest_lists[0])
    if width < 2 or any(len(captions) != width for captions in nbest_lists):
        raise InvalidInputError("N-best lists must all hold the same number (>= 2) of captions")
    return _leave_one_out_bleu(nbest_lists, max_n)


def novelty_rate(generated: Sequence[Tokens], training: Iterable[Tokens]) -> float:
    """Fraction of generated captions absent verbatim from the training captions."""
    if not generated:
        raise InvalidInputError("Novelty of an empty caption list")
    seen = {tuple(caption) for caption in training}
    return sum(tuple(caption) not in seen for caption in generated) / len(generated)
