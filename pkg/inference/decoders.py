"""
Sentence generation: greedy, sampling and beam search.

Every decoder accepts one parameter set or an ensemble of same-vocabulary
parameter sets; an ensemble's next-word distribution is the mean of its
members' distributions.
"""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from captioner.models import LstmState, Parameters
from captioner.network import (
    embed_word,
    initial_state,
    lstm_step,
    word_distribution,
    word_log_distribution,
)
from core.exceptions import InvalidInputError, ShapeError
from core.utils.logging_utils import get_logger
from dataset.vocabulary import START_ID, STOP_ID
from inference.models import BeamHypothesis, DecodeConfig, DecodeMode
from numerics.kernels import Vector, as_vector, sample_categorical
from numerics.rng import RngState

logger = get_logger(__name__)

Models = Union[Parameters, Sequence[Parameters]]
States = Tuple[LstmState, ...]


def _member_vectors(dists: Sequence[Vector]) -> List[Vector]:
    if not dists:
        raise InvalidInputError("Ensemble needs at least one distribution")
    vectors = [as_vector(dist) for dist in dists]
    size = vectors[0].shape[0]
    if any(vector.shape[0] != size for vector in vectors):
        raise ShapeError(f"Distributions have mixed dims {[vector.shape[0] for vector in vectors]}")
    return vectors


def ensemble_distribution(dists: Sequence[Vector]) -> Vector:
    """Arithmetic mean of same-size distributions."""
    vectors = _member_vectors(dists)
    if len(vectors) == 1:
        return vectors[0]
    return np.mean(np.stack(vectors), axis=0)


def ensemble_log_distribution(log_dists: Sequence[Vector]) -> Vector:
    """Log of the arithmetic mean of distributions given in log space."""
    vectors = _member_vectors(log_dists)
    if len(vectors) == 1:
        return vectors[0]
    return np.logaddexp.reduce(np.stack(vectors), axis=0) - np.log(len(vectors))


def as_ensemble(models: Models) -> Tuple[Parameters, ...]:
    members = (models,) if isinstance(models, Parameters) else tuple(models)
    if not members:
        raise InvalidInputError("No models to decode with")
    vocab_size = members[0].dims.vocab_size
    if any(member.dims.vocab_size != vocab_size for member in members):
        raise ShapeError("Ensemble members disagree on vocabulary size")
    return members


def _start_states(members: Tuple[Parameters, ...], features: Vector) -> States:
    return tuple(
        lstm_step(embed_word(START_ID, params), initial_state(params, features), params)
        for params in members
    )


def _next_distribution(members: Tuple[Parameters, ...], states: States) -> Vector:
    return ensemble_distribution(
        [word_distribution(state, params) for state, params in zip(states, members)]
    )


def _next_log_distribution(members: Tuple[Parameters, ...], states: States) -> Vector:
    return ensemble_log_distribution(
        [word_log_distribution(state, params) for state, params in zip(states, members)]
    )


def _advance(members: Tuple[Parameters, ...], states: States, token: int) -> States:
    return tuple(
        lstm_step(embed_word(token, params), state, params)
        for state, params in zip(states, members)
    )


def greedy_caption(features: Vector, models: Models, max_len: int) -> Tuple[int, ...]:
    """Take the most probable word at every step (lowest id on ties)."""
    if max_len < 1:
        raise InvalidInputError(f"max_len must be at least 1 (got {max_len})")
    members = as_ensemble(models)
    states = _start_states(members, as_vector(features))
    tokens = [START_ID]
    for _ in range(max_len):
        token = int(np.argmax(_next_log_distribution(members, states)))
        tokens.append(token)
        if token == STOP_ID:
            break
        states = _advance(members, states, token)
    return tuple(tokens)


def sample_caption(
    features: Vector, models: Models, max_len: int, rng: RngState
) -> Tuple[int, ...]:
    """Draw each word from p_t, feeding the draw back in, until STOP or max_len words."""
    if max_len < 1:
        raise InvalidInputError(f"max_len must be at least 1 (got {max_len})")
    members = as_ensemble(models)
    states = _start_states(members, as_vector(features))
    tokens = [START_ID]
    for _ in range(max_len):
        token = sample_categorical(_next_distribution(members, states), rng)
        tokens.append(token)
        if token == STOP_ID:
            break
        states = _advance(members, states, token)
    return tuple(tokens)


def _expansions(log_probs: Vector, width: int) -> List[int]:
    """STOP plus the width most likely other words (ties by ascending id)."""
    order = np.lexsort((np.arange(log_probs.shape[0]), -log_probs))
    words = [int(token) for token in order if token != STOP_ID]
    return [STOP_ID, *words[:width]]


def beam_search(features: Vector, models: Models, config: DecodeConfig) -> List[BeamHypothesis]:
    """
    Keep the k best partial sentences, extend each by STOP and by its k most
    likely other words, keep the best k again.

    A parent that can stop still offers k live continuations, so the live
    beam stays at k while the vocabulary allows. Candidates ending in STOP
    move to a completed pool (capped at k); the rest refill the live beam up
    to k. At max_len every surviving candidate is completed as truncated.
    Scores are raw summed log-probabilities; ordering is (log_prob
    descending, tokens ascending) throughout. With k = 1 this is exactly
    greedy_caption; with k >= vocab_size no continuation is skipped.
    """
    k = config.beam_width
    members = as_ensemble(models)
    features = as_vector(features)

    start = _start_states(members, features)
    live = [BeamHypothesis(tokens=(START_ID,), log_prob=0.0, states=start)]
    completed: List[BeamHypothesis] = []

    for step in range(config.max_len):
        last_step = step == config.max_len - 1
        candidates = []
        for hypothesis in live:
            log_probs = _next_log_distribution(members, hypothesis.states)
            for token in _expansions(log_probs, k):
                score = hypothesis.log_prob + float(log_probs[token])
                candidates.append((score, hypothesis.tokens + (token,), hypothesis))
        candidates.sort(key=lambda candidate: (-candidate[0], candidate[1]))

        next_live: List[BeamHypothesis] = []
        for score, tokens, parent in candidates:
            if tokens[-1] == STOP_ID or last_step:
                completed.append(
                    BeamHypothesis(
                        tokens=tokens, log_prob=score, states=parent.states, finished=True
                    )
                )
            else:
                states = _advance(members, parent.states, tokens[-1])
                next_live.append(BeamHypothesis(tokens=tokens, log_prob=score, states=states))
                if len(next_live) == k:
                    break

        completed.sort(key=lambda hypothesis: hypothesis.sort_key)
        del completed[k:]
        live = next_live
        logger.debug(f"Beam step {step + 1}: {len(live)} live, {len(completed)} completed")

        if not live:
            break
        # Log-probabilities only decrease, so a full pool that beats every live beam is final
        if len(completed) == k and live[0].log_prob < completed[-1].log_prob:
            break

    return completed


def decode(
    features: Vector,
    models: Models,
    config: DecodeConfig,
    rng: Optional[RngState] = None,
) -> List[BeamHypothesis]:
    """Dispatch on config.mode; greedy and sample return a single hypothesis."""
    if config.mode is DecodeMode.BEAM:
        return beam_search(features, models, config)[:config.nbest]

    members = as_ensemble(models)
    if config.mode is DecodeMode.GREEDY:
        tokens = greedy_caption(features, members, config.max_len)
    else:
        tokens = sample_caption(features, members, config.max_len, rng or RngState(config.seed))
    log_prob = ensemble_log_prob(features, members, tokens)
    return [BeamHypothesis(tokens=tokens, log_prob=log_prob, states=(), finished=True)]


def ensemble_log_prob(features: Vector, models: Models, tokens: Sequence[int]) -> float:
    """Log-probability of the words after START under the (ensemble) model."""
    members = as_ensemble(models)
    states = _start_states(members, as_vector(features))
    total = 0.0
    for position, token in enumerate(tokens[1:], start=1):
        total += float(_next_log_distribution(members, states)[token])
        if position < len(tokens) - 1:
            states = _advance(members, states, token)
    return total
