from dataclasses import dataclass, fields, replace
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from core.exceptions import InvalidConfigError, ShapeError
from numerics.kernels import Matrix, Vector

# Iteration order for every weight-set operation (init draws, checkpoint layout,
# gradient checks). Changing it changes what a given seed produces.
PARAMETER_NAMES: Tuple[str, ...] = (
    "w_ix", "w_im",
    "w_fx", "w_fm",
    "w_ox", "w_om",
    "w_cx", "w_cm",
    "w_e", "w_enc", "w_d",
)


@dataclass(frozen=True)
class Dims:
    feature_dim: int
    embed_dim: int
    hidden_dim: int
    vocab_size: int

    def __post_init__(self):
        for field in fields(self):
            value = getattr(self, field.name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise InvalidConfigError(f"{field.name} must be a positive integer (got {value!r})")

    def parameter_shapes(self) -> Dict[str, Tuple[int, int]]:
        """Expected (rows, cols) of every weight matrix."""
        embed, hidden = self.embed_dim, self.hidden_dim
        shapes = {}
        for gate in ("i", "f", "o", "c"):
            shapes[f"w_{gate}x"] = (hidden, embed)
            shapes[f"w_{gate}m"] = (hidden, hidden)
        shapes["w_e"] = (embed, self.vocab_size)
        shapes["w_enc"] = (embed, self.feature_dim)
        shapes["w_d"] = (self.vocab_size, hidden)
        return {name: shapes[name] for name in PARAMETER_NAMES}

    def to_dict(self) -> Dict[str, int]:
        return {field.name: int(getattr(self, field.name)) for field in fields(self)}


@dataclass(frozen=True)
class WeightSet:
    """One float64 matrix per trainable weight, shape-checked against dims."""

    dims: Dims
    w_ix: Matrix
    w_im: Matrix
    w_fx: Matrix
    w_fm: Matrix
    w_ox: Matrix
    w_om: Matrix
    w_cx: Matrix
    w_cm: Matrix
    w_e: Matrix
    w_enc: Matrix
    w_d: Matrix

    def __post_init__(self):
        for name, shape in self.dims.parameter_shapes().items():
            matrix = np.asarray(getattr(self, name), dtype=np.float64)
            if matrix.shape != shape:
                raise ShapeError(f"{name} has shape {matrix.shape}, expected {shape}")
            object.__setattr__(self, name, matrix)

    @classmethod
    def zeros(cls, dims: Dims):
        shapes = dims.parameter_shapes()
        return cls(dims=dims, **{name: np.zeros(shape) for name, shape in shapes.items()})

    @classmethod
    def from_mapping(cls, dims: Dims, matrices: Dict[str, Matrix]):
        return cls(dims=dims, **{name: matrices[name] for name in PARAMETER_NAMES})

    def items(self) -> Iterator[Tuple[str, Matrix]]:
        for name in PARAMETER_NAMES:
            yield name, getattr(self, name)

    def replace(self, **matrices: Matrix):
        return replace(self, **matrices)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(matrix)) for _, matrix in self.items())

    def check_congruent(self, other: "WeightSet") -> None:
        if self.dims != other.dims:
            raise ShapeError(f"Weight sets disagree on dims: {self.dims} vs {other.dims}")


@dataclass(frozen=True)
class Parameters(WeightSet):
    """All trainable weights of the caption model."""


@dataclass(frozen=True)
class Gradients(WeightSet):
    """Loss gradient with respect to every Parameters matrix."""

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(matrix * matrix)) for _, matrix in self.items())))

    def scaled(self, factor: float) -> "Gradients":
        return Gradients.from_mapping(
            self.dims, {name: matrix * factor for name, matrix in self.items()}
        )

    def __add__(self, other: "Gradients") -> "Gradients":
        self.check_congruent(other)
        return Gradients.from_mapping(
            self.dims, {name: matrix + getattr(other, name) for name, matrix in self.items()}
        )


@dataclass(frozen=True)
class LstmState:
    c: Vector
    m: Vector

    @classmethod
    def zeros(cls, hidden_dim: int) -> "LstmState":
        return cls(c=np.zeros(hidden_dim), m=np.zeros(hidden_dim))


@dataclass(frozen=True)
class StepRecord:
    """Everything one unrolled LSTM copy computed, kept for backpropagation."""

    token: Optional[int]  # None for the image step
    x: Vector  # input actually fed to the gates (after dropout)
    mask: Optional[Vector]  # inverted-dropout mask applied to x, if any
    c_prev: Vector
    m_prev: Vector
    i: Vector
    f: Vector
    o: Vector
    g: Vector  # tanh(W_cx x + W_cm m_prev)
    c: Vector
    m: Vector
    p: Optional[Vector]  # distribution over the next word; None for the image step
    log_p: Optional[Vector] = None  # log_softmax of the same logits

    @property
    def state(self) -> LstmState:
        return LstmState(c=self.c, m=self.m)


@dataclass(frozen=True)
class ForwardTrace:
    features: Vector
    tokens: Tuple[int, ...]
    image_step: StepRecord
    steps: Tuple[StepRecord, ...]
    encoder_calls: int = 1

    @property
    def length(self) -> int:
        """Number of word predictions, N."""
        return len(self.steps)

    def target_log_probabilities(self) -> Vector:
        """log p_t(S_t) for t = 1..N, without underflow for confident models."""
        return np.array([step.log_p[self.tokens[t + 1]] for t, step in enumerate(self.steps)])
