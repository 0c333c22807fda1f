"""
The caption network: image projection, word embedding, LSTM cell, vocabulary
softmax, and the unrolled forward/backward passes over one (image, sentence)
pair.

The image enters exactly once, as the input of an extra LSTM step before the
start word; the initial state before that step is all zeros. There are no bias
terms anywhere.
"""

from dataclasses import replace
from typing import Dict, Optional, Sequence

import numpy as np

from captioner.models import (
    Dims,
    ForwardTrace,
    Gradients,
    LstmState,
    PARAMETER_NAMES,
    Parameters,
    StepRecord,
)
from core.exceptions import (
    InconsistentTraceError,
    InvalidConfigError,
    InvalidTokenError,
    MalformedSequenceError,
    ShapeError,
)
from dataset.vocabulary import START_ID, STOP_ID
from numerics.kernels import (
    Activation,
    Vector,
    activate,
    as_vector,
    dropout_mask,
    log_softmax,
    matvec,
    softmax,
)
from numerics.rng import RngState


def init_parameters(dims: Dims, scale: float, rng: RngState) -> Parameters:
    """Draw every weight uniformly from [-scale, scale], in PARAMETER_NAMES order."""
    if not scale >= 0.0:
        raise InvalidConfigError(f"Initialization scale must be non-negative (got {scale})")
    matrices = {}
    for name, shape in dims.parameter_shapes().items():
        if scale == 0.0:
            matrices[name] = np.zeros(shape)
        else:
            matrices[name] = rng.uniform(-scale, scale, shape)
    return Parameters.from_mapping(dims, matrices)


def encode_image(features: Vector, params: Parameters) -> Vector:
    """x_{-1} = W_enc . features."""
    features = as_vector(features)
    if features.shape[0] != params.dims.feature_dim:
        raise ShapeError(
            f"Image features have dim {features.shape[0]}, model expects {params.dims.feature_dim}"
        )
    return matvec(params.w_enc, features)


def embed_word(token: int, params: Parameters) -> Vector:
    """x_t = W_e S_t, i.e. column `token` of W_e."""
    if not 0 <= int(token) < params.dims.vocab_size:
        raise InvalidTokenError(
            f"Token id {token} outside vocabulary of size {params.dims.vocab_size}"
        )
    return params.w_e[:, int(token)].copy()


def _cell_forward(
    x: Vector,
    prev: LstmState,
    params: Parameters,
    token: Optional[int] = None,
    mask: Optional[Vector] = None,
) -> StepRecord:
    if x.shape != (params.dims.embed_dim,):
        raise ShapeError(f"LSTM input has shape {x.shape}, expected ({params.dims.embed_dim},)")
    if prev.c.shape != (params.dims.hidden_dim,) or prev.m.shape != (params.dims.hidden_dim,):
        raise ShapeError(f"LSTM state does not have hidden_dim {params.dims.hidden_dim}")

    i = activate(Activation.SIGMOID, matvec(params.w_ix, x) + matvec(params.w_im, prev.m))
    f = activate(Activation.SIGMOID, matvec(params.w_fx, x) + matvec(params.w_fm, prev.m))
    o = activate(Activation.SIGMOID, matvec(params.w_ox, x) + matvec(params.w_om, prev.m))
    g = activate(Activation.TANH, matvec(params.w_cx, x) + matvec(params.w_cm, prev.m))
    c = f * prev.c + i * g
    m = o * c
    return StepRecord(
        token=token, x=x, mask=mask, c_prev=prev.c, m_prev=prev.m,
        i=i, f=f, o=o, g=g, c=c, m=m, p=None,
    )


def lstm_step(x: Vector, prev: LstmState, params: Parameters) -> LstmState:
    """One LSTM update: gates i, f, o; c = f*c_prev + i*tanh(.); m = o*c."""
    return _cell_forward(as_vector(x), prev, params).state


def word_distribution(state: LstmState, params: Parameters) -> Vector:
    """p = softmax(W_d m)."""
    return softmax(matvec(params.w_d, state.m))


def word_log_distribution(state: LstmState, params: Parameters) -> Vector:
    """log p, computed from the logits so confident predictions never round to log 0."""
    return log_softmax(matvec(params.w_d, state.m))


def initial_state(params: Parameters, features: Vector) -> LstmState:
    """State after the image step, ready to consume the start word."""
    zero = LstmState.zeros(params.dims.hidden_dim)
    return lstm_step(encode_image(features, params), zero, params)


def check_sequence(tokens: Sequence[int], vocab_size: int, require_stop: bool = True) -> None:
    if len(tokens) < (2 if require_stop else 1):
        raise MalformedSequenceError(f"Sequence of length {len(tokens)} is too short")
    if tokens[0] != START_ID:
        raise MalformedSequenceError("Sequence does not begin with the start word")
    if require_stop and tokens[-1] != STOP_ID:
        raise MalformedSequenceError("Sequence does not end with the stop word")
    for token in tokens:
        if not 0 <= token < vocab_size:
            raise InvalidTokenError(f"Token id {token} outside vocabulary of size {vocab_size}")


def forward_sequence(
    features: Vector,
    tokens: Sequence[int],
    params: Parameters,
    dropout_rate: float = 0.0,
    rng: Optional[RngState] = None,
    require_stop: bool = True,
) -> ForwardTrace:
    """
    Unroll the network over one sentence with teacher forcing.

    Step -1 consumes the projected image from a zero state; step t consumes
    tokens[t] and stores p_{t+1}. With dropout_rate > 0 every LSTM input is
    multiplied by an inverted-dropout mask drawn from rng.
    """
    tokens = tuple(int(token) for token in tokens)
    check_sequence(tokens, params.dims.vocab_size, require_stop=require_stop)
    if dropout_rate > 0.0 and rng is None:
        raise InvalidConfigError("Dropout needs an RngState")
    features = as_vector(features)

    def masked(x: Vector):
        if dropout_rate == 0.0:
            return x, None
        mask = dropout_mask(x.shape[0], dropout_rate, rng)
        return x * mask, mask

    x, mask = masked(encode_image(features, params))
    image_step = _cell_forward(x, LstmState.zeros(params.dims.hidden_dim), params, mask=mask)

    state = image_step.state
    steps = []
    for token in tokens[:-1]:
        x, mask = masked(embed_word(token, params))
        record = _cell_forward(x, state, params, token=token, mask=mask)
        logits = matvec(params.w_d, record.m)
        record = replace(record, p=softmax(logits), log_p=log_softmax(logits))
        steps.append(record)
        state = record.state

    return ForwardTrace(features=features, tokens=tokens, image_step=image_step, steps=tuple(steps))


def trace_log_prob(trace: ForwardTrace) -> float:
    """sum_t log p_t(S_t) read off a trace."""
    return float(np.sum(trace.target_log_probabilities()))


def prefix_log_prob(features: Vector, tokens: Sequence[int], params: Parameters) -> float:
    """Log-probability of the words after START, whether or not the sequence is terminated."""
    if len(tokens) == 1:
        check_sequence(tokens, params.dims.vocab_size, require_stop=False)
        return 0.0
    return trace_log_prob(forward_sequence(features, tokens, params, require_stop=False))


def sequence_log_prob(features: Vector, tokens: Sequence[int], params: Parameters) -> float:
    """log p(S | I) of a START...STOP sentence, by the chain rule."""
    return trace_log_prob(forward_sequence(features, tokens, params))


def _cell_backward(
    record: StepRecord,
    dm: Vector,
    dc: Vector,
    params: Parameters,
    grads: Dict[str, np.ndarray],
):
    """Backpropagate through one LSTM copy; returns (dx_raw, dm_prev, dc_prev)."""
    do = dm * record.c
    dc = dc + dm * record.o
    df = dc * record.c_prev
    di = dc * record.g
    dg = dc * record.i
    dc_prev = dc * record.f

    da_i = di * record.i * (1.0 - record.i)
    da_f = df * record.f * (1.0 - record.f)
    da_o = do * record.o * (1.0 - record.o)
    da_c = dg * (1.0 - record.g * record.g)

    dx = np.zeros_like(record.x)
    dm_prev = np.zeros_like(record.m_prev)
    for gate, da in (("i", da_i), ("f", da_f), ("o", da_o), ("c", da_c)):
        grads[f"w_{gate}x"] += np.outer(da, record.x)
        grads[f"w_{gate}m"] += np.outer(da, record.m_prev)
        dx += getattr(params, f"w_{gate}x").T @ da
        dm_prev += getattr(params, f"w_{gate}m").T @ da

    if record.mask is not None:
        dx = dx * record.mask
    return dx, dm_prev, dc_prev


def backward_sequence(trace: ForwardTrace, tokens: Sequence[int], params: Parameters) -> Gradients:
    """Exact gradient of L = -sum_t log p_t(S_t) with respect to every weight matrix."""
    tokens = tuple(int(token) for token in tokens)
    if tokens != trace.tokens:
        raise InconsistentTraceError("Trace was produced for a different token sequence")
    dims = params.dims
    if trace.image_step.x.shape != (dims.embed_dim,) or trace.features.shape != (dims.feature_dim,):
        raise InconsistentTraceError("Trace was produced with parameters of different dims")

    grads = {name: np.zeros(shape) for name, shape in params.dims.parameter_shapes().items()}
    dm_next = np.zeros(params.dims.hidden_dim)
    dc_next = np.zeros(params.dims.hidden_dim)

    for t in range(trace.length - 1, -1, -1):
        record = trace.steps[t]
        dlogits = record.p.copy()
        dlogits[tokens[t + 1]] -= 1.0
        grads["w_d"] += np.outer(dlogits, record.m)
        dm = params.w_d.T @ dlogits + dm_next
        dx, dm_next, dc_next = _cell_backward(record, dm, dc_next, params, grads)
        grads["w_e"][:, record.token] += dx

    dx, _, _ = _cell_backward(trace.image_step, dm_next, dc_next, params, grads)
    grads["w_enc"] += np.outer(dx, trace.features)

    return Gradients.from_mapping(params.dims, {name: grads[name] for name in PARAMETER_NAMES})
