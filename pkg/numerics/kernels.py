"""Dense float64 vector/matrix kernels and categorical sampling."""

from enum import Enum
from typing import Sequence, Union

import numpy as np
import numpy.typing as npt

from core.exceptions import InvalidConfigError, InvalidInputError, ShapeError
from numerics.rng import RngState

Vector = npt.NDArray[np.float64]
Matrix = npt.NDArray[np.float64]

DISTRIBUTION_TOLERANCE = 1e-9


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"


def as_vector(values: Union[Sequence[float], npt.ArrayLike]) -> Vector:
    """Coerce to a 1-D float64 array."""
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        raise ShapeError(f"Expected a vector, got shape {vector.shape}")
    return vector


def as_matrix(values: npt.ArrayLike) -> Matrix:
    """Coerce to a 2-D float64 array with positive dimensions."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"Expected a matrix, got shape {matrix.shape}")
    return matrix


def ensure_finite(values: npt.NDArray[np.float64], what: str = "input") -> None:
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f"{what} contains non-finite entries")


def sigmoid(x: Vector) -> Vector:
    # tanh form keeps sigmoid(x) + sigmoid(-x) == 1 to rounding and never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def activate(kind: Union[Activation, str], x: Vector) -> Vector:
    """Elementwise sigmoid or tanh."""
    x = as_vector(x)
    ensure_finite(x)
    kind = Activation(kind)
    if kind is Activation.SIGMOID:
        return sigmoid(x)
    return np.tanh(x)


def softmax(logits: Vector) -> Vector:
    """Max-subtracted softmax; positive entries summing to one."""
    logits = as_vector(logits)
    if logits.size == 0:
        raise InvalidInputError("softmax of an empty vector")
    ensure_finite(logits, "logits")
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def log_softmax(logits: Vector) -> Vector:
    """Log of softmax(logits), computed without forming tiny probabilities."""
    logits = as_vector(logits)
    if logits.size == 0:
        raise InvalidInputError("log_softmax of an empty vector")
    ensure_finite(logits, "logits")
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def matvec(weights: Matrix, x: Vector) -> Vector:
    """Matrix-vector product with a shape check."""
    if weights.ndim != 2 or x.ndim != 1 or weights.shape[1] != x.shape[0]:
        raise ShapeError(f"Cannot multiply {weights.shape} by {x.shape}")
    return weights @ x


def one_hot(index: int, size: int) -> Vector:
    vector = np.zeros(size, dtype=np.float64)
    vector[index] = 1.0
    return vector


def check_distribution(dist: Vector) -> Vector:
    dist = as_vector(dist)
    if dist.size == 0:
        raise InvalidInputError("Empty distribution")
    ensure_finite(dist, "distribution")
    if np.any(dist < 0.0):
        raise InvalidInputError("Distribution has negative entries")
    total = float(dist.sum())
    if abs(total - 1.0) > DISTRIBUTION_TOLERANCE:
        raise InvalidInputError(f"Distribution sums to {total}, not 1")
    return dist


def sample_categorical(dist: Vector, rng: RngState) -> int:
    """Draw index i with probability dist[i]; consumes exactly one draw from rng."""
    dist = check_distribution(dist)
    u = rng.random() * float(dist.sum())
    index = int(np.searchsorted(np.cumsum(dist), u, side="right"))
    # Rounding in the cumulative sum can push u past the end; fall back to the
    # last index carrying mass
    last_positive = int(np.flatnonzero(dist > 0.0)[-1])
    return min(index, last_positive)


def dropout_mask(size: int, rate: float, rng: RngState) -> Vector:
    """Inverted-dropout mask: 0 with probability rate, 1 / (1 - rate) otherwise."""
    if not 0.0 <= rate < 1.0:
        raise InvalidConfigError(f"Dropout rate must lie in [0, 1) (got {rate})")
    if rate == 0.0:
        return np.ones(size, dtype=np.float64)
    keep = rng.random(size) >= rate
    return keep / (1.0 - rate)
