"""
Corpus BLEU: clipped n-gram precision with a brevity penalty.

Counts are summed over the whole corpus before dividing, so corpus BLEU is not
the mean of sentence BLEUs. The effective reference length of a pair is the
reference length closest to the candidate's, shorter on ties.
"""

import math
from collections import Counter
from typing import List, Sequence, Tuple

from core.exceptions import InvalidInputError
from metrics.models import EvalPair

Tokens = Sequence[str]


def ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_counts(candidate: Tokens, references: Sequence[Tokens], n: int) -> Tuple[int, int]:
    """(matches clipped at the max count in any reference, candidate n-gram total)."""
    candidate_counts = ngram_counts(candidate, n)
    if not candidate_counts:
        return 0, 0
    max_reference_counts = Counter()
    for reference in references:
        max_reference_counts |= ngram_counts(reference, n)
    clipped = sum(
        min(count, max_reference_counts[gram]) for gram, count in candidate_counts.items()
    )
    return clipped, sum(candidate_counts.values())


def closest_reference_length(candidate_length: int, references: Sequence[Tokens]) -> int:
    gaps = ((abs(len(reference) - candidate_length), len(reference)) for reference in references)
    return min(gaps)[1]


def brevity_penalty(candidate_length: int, reference_length: int) -> float:
    if candidate_length == 0:
        return 0.0
    if candidate_length >= reference_length:
        return 1.0
    return math.exp(1.0 - reference_length / candidate_length)


def modified_precision(pairs: Sequence[EvalPair], n: int) -> Tuple[int, int]:
    """Corpus-level (clipped matches, total n-grams) for n-grams of order n."""
    if n < 1:
        raise InvalidInputError(f"n-gram order must be positive (got {n})")
    matches = total = 0
    for pair in pairs:
        pair_matches, pair_total = clipped_counts(pair.candidate, pair.references, n)
        matches += pair_matches
        total += pair_total
    return matches, total


def corpus_bleu(
    candidates: Sequence[Tokens],
    references: Sequence[Sequence[Tokens]],
    max_n: int = 4,
    smooth: bool = False,
) -> float:
    """
    BP * exp(mean_i ln p_i) over n-gram orders 1..max_n.

    Returns 0 when any p_i is zero. With smooth, orders >= 2 use
    (matches + 1) / (total + 1).
    """
    if max_n < 1:
        raise InvalidInputError(f"max_n must be positive (got {max_n})")
    if not candidates:
        raise InvalidInputError("BLEU of an empty corpus")
    if len(candidates) != len(references):
        raise InvalidInputError("Need one reference set per candidate")

    candidate_length = sum(len(candidate) for candidate in candidates)
    reference_length = sum(
        closest_reference_length(len(candidate), refs)
        for candidate, refs in zip(candidates, references)
    )

    log_precision = 0.0
    for n in range(1, max_n + 1):
        matches = total = 0
        for candidate, refs in zip(candidates, references):
            pair_matches, pair_total = clipped_counts(candidate, refs, n)
            matches += pair_matches
            total += pair_total
        if smooth and n > 1:
            matches, total = matches + 1, total + 1
        if matches == 0 or total == 0:
            return 0.0
        log_precision += math.log(matches / total)

    return brevity_penalty(candidate_length, reference_length) * math.exp(log_precision / max_n)


def bleu(pairs: Sequence[EvalPair], max_n: int = 4) -> float:
    """Corpus BLEU-max_n of evaluation pairs, unsmoothed."""
    if not pairs:
        raise InvalidInputError("BLEU of an empty corpus")
    candidates = [pair.candidate for pair in pairs]
    return corpus_bleu(candidates, [pair.references for pair in pairs], max_n)


def sentence_bleu(pair: EvalPair, max_n: int = 4, smooth: bool = False) -> float:
    """BLEU of a single pair; smoothing is available here for diagnostics only."""
    return corpus_bleu([pair.candidate], [pair.references], max_n, smooth=smooth)


def bleu_report(pairs: Sequence[EvalPair], max_n: int = 4) -> List[Tuple[str, float]]:
    """[("bleu1", ...), ..., ("bleu<max_n>", ...)]."""
    return [(f"bleu{n}", bleu(pairs, n)) for n in range(1, max_n + 1)]
