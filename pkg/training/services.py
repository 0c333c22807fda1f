import math
import time
from typing import Callable, List, Optional, Sequence

import numpy as np

from captioner.models import Dims, ForwardTrace, Gradients, Parameters
from captioner.network import (
    backward_sequence,
    check_sequence,
    forward_sequence,
    init_parameters,
    trace_log_prob,
)
from core.exceptions import (
    DivergenceError,
    InconsistentTraceError,
    InvalidInputError,
    ShapeError,
)
from core.utils.logging_utils import get_logger
from dataset.models import TrainingExample
from numerics.kernels import Vector, as_vector, dropout_mask
from numerics.rng import RngState
from training.models import TrainConfig, TrainReport

logger = get_logger(__name__)

EpochCallback = Callable[[int, float], None]

# RngState.fork streams of a training run
INIT_STREAM = 0
ORDER_STREAM = 1
DROPOUT_STREAM = 2


def caption_loss(trace: ForwardTrace, tokens: Sequence[int]) -> float:
    """L(I, S) = -sum_t log p_t(S_t)."""
    if tuple(int(token) for token in tokens) != trace.tokens:
        raise InconsistentTraceError("Trace was produced for a different token sequence")
    return -trace_log_prob(trace)


def apply_dropout(x: Vector, rate: float, rng: RngState) -> Vector:
    """Inverted dropout: zero each entry with probability rate, scale survivors by 1/(1-rate)."""
    x = as_vector(x)
    return x * dropout_mask(x.shape[0], rate, rng)


def clip_gradients(grads: Gradients, max_norm: Optional[float]) -> Gradients:
    """Rescale to global norm max_norm when larger; no-op when max_norm is None."""
    if max_norm is None:
        return grads
    norm = grads.global_norm()
    if norm <= max_norm:
        return grads
    return grads.scaled(max_norm / norm)


def sgd_step(
    params: Parameters,
    grads: Gradients,
    lr: float,
    grad_clip: Optional[float] = None,
) -> Parameters:
    """w <- w - lr * g for every weight."""
    if params.dims != grads.dims:
        raise ShapeError(f"Gradients for {grads.dims} cannot update parameters for {params.dims}")
    grads = clip_gradients(grads, grad_clip)
    return Parameters.from_mapping(
        params.dims, {name: weight - lr * getattr(grads, name) for name, weight in params.items()}
    )


def _check_examples(examples: Sequence[TrainingExample], dims: Dims) -> List[Vector]:
    if not examples:
        raise InvalidInputError("Cannot train on an empty dataset")
    features = []
    for example in examples:
        check_sequence(example.tokens, dims.vocab_size)
        vector = example.feature_vector
        if vector.shape != (dims.feature_dim,):
            raise ShapeError(
                f"Example {example.image_id} has feature dim {vector.shape[0]}, "
                f"model expects {dims.feature_dim}"
            )
        features.append(vector)
    return features


def train(
    examples: Sequence[TrainingExample],
    dims: Dims,
    config: TrainConfig,
    initial_params: Optional[Parameters] = None,
    on_epoch: Optional[EpochCallback] = None,
) -> TrainReport:
    """
    Minimize the summed caption loss by plain SGD.

    One step per batch of config.batch_size (image, caption) pairs, gradients
    summed over the batch. Example order is reshuffled every epoch from the run
    seed when config.shuffle is set. The loss recorded for an epoch is the mean
    per predicted word, measured before each example's update.
    """
    features = _check_examples(examples, dims)
    started = time.perf_counter()

    rng = RngState(config.seed)
    params = initial_params or init_parameters(dims, config.init_scale, rng.fork(INIT_STREAM))
    if params.dims != dims:
        raise ShapeError(f"Initial parameters have dims {params.dims}, expected {dims}")
    order_rng = rng.fork(ORDER_STREAM)
    dropout_rng = rng.fork(DROPOUT_STREAM)

    words_per_epoch = sum(len(example.tokens) - 1 for example in examples)
    losses: List[float] = []
    logger.info(
        f"Training on {len(examples)} pairs ({words_per_epoch} words/epoch) "
        f"for {config.epochs} epochs, lr={config.learning_rate}, "
        f"dropout={config.dropout_rate}, batch={config.batch_size}"
    )

    for epoch in range(1, config.epochs + 1):
        if config.shuffle:
            order = order_rng.permutation(len(examples))
        else:
            order = np.arange(len(examples))

        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch_grads = None
            for index in order[start:start + config.batch_size]:
                example = examples[index]
                try:
                    trace = forward_sequence(
                        features[index], example.tokens, params,
                        dropout_rate=config.dropout_rate, rng=dropout_rng,
                    )
                except InvalidInputError as exc:
                    raise DivergenceError(
                        epoch, f"Training diverged at epoch {epoch}: {exc.message}"
                    ) from exc
                loss = caption_loss(trace, example.tokens)
                if not math.isfinite(loss):
                    raise DivergenceError(epoch)
                total += loss
                grads = backward_sequence(trace, example.tokens, params)
                batch_grads = grads if batch_grads is None else batch_grads + grads
            params = sgd_step(params, batch_grads, config.learning_rate, config.grad_clip)

        if not params.is_finite():
            raise DivergenceError(epoch)
        mean_loss = total / words_per_epoch
        losses.append(mean_loss)
        logger.info(f"Epoch {epoch}/{config.epochs}: loss/word={mean_loss:.6f}")
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)

    return TrainReport(
        epoch_losses=tuple(losses),
        params=params,
        wall_time_seconds=time.perf_counter() - started,
        words_per_epoch=words_per_epoch,
        examples_per_epoch=len(examples),
    )
