"""
Counter-based random number generation.

RngState is SplitMix64 evaluated at explicit counter positions, so every draw is
a pure function of (seed, counter) and streams are reproducible bit for bit on
any platform:

    z_i  = (seed + i * 0x9E3779B97F4A7C15) mod 2**64,   i = counter + 1, counter + 2, ...
    z    = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9        mod 2**64
    z    = (z ^ (z >> 27)) * 0x94D049BB133111EB        mod 2**64
    u64  =  z ^ (z >> 31)

A float draw is (u64 >> 11) * 2**-53, uniform on [0, 1). Integer draws below n
are floor(float * n). Every draw advances the counter by one.
"""

from typing import Optional, Tuple, Union

import numpy as np
import numpy.typing as npt

from core.exceptions import InvalidConfigError, InvalidInputError

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FORK_GAMMA = 0xD1B54A32D192ED03

Shape = Union[int, Tuple[int, ...]]
Floats = npt.NDArray[np.float64]


def _mix_array(z: npt.NDArray[np.uint64]) -> npt.NDArray[np.uint64]:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _mix_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class RngState:
    """Explicitly seeded, counter-based generator (see module docstring)."""

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        if not 0 <= int(seed) <= _MASK64:
            raise InvalidConfigError(f"Seed must be a 64-bit unsigned integer (got {seed})")
        if counter < 0:
            raise InvalidConfigError(f"Counter must be non-negative (got {counter})")
        self.seed = int(seed)
        self.counter = int(counter)

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, counter={self.counter})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RngState):
            return NotImplemented
        return self.seed == other.seed and self.counter == other.counter

    def copy(self) -> "RngState":
        return RngState(self.seed, self.counter)

    def fork(self, stream: int) -> "RngState":
        """Independent generator for a named sub-stream; does not advance self."""
        child_seed = _mix_int(self.seed ^ _mix_int((stream + 1) * _FORK_GAMMA))
        return RngState(child_seed)

    def next_u64(self, size: int) -> npt.NDArray[np.uint64]:
        """Draw `size` raw 64-bit words."""
        if size < 0:
            raise InvalidInputError(f"Draw count must be non-negative (got {size})")
        positions = np.arange(self.counter + 1, self.counter + 1 + size, dtype=np.uint64)
        with np.errstate(over="ignore"):
            words = _mix_array(np.uint64(self.seed) + positions * np.uint64(_GAMMA))
        self.counter += size
        return words

    def random(self, size: Optional[Shape] = None) -> Union[float, Floats]:
        """Uniform floats on [0, 1); a Python float when size is None."""
        if size is None:
            return float(self._floats(1)[0])
        shape = (size,) if isinstance(size, int) else tuple(size)
        return self._floats(int(np.prod(shape, dtype=np.int64))).reshape(shape)

    def uniform(self, low: float, high: float, size: Shape) -> Floats:
        """Uniform floats on [low, high)."""
        return low + (high - low) * self.random(size)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n < 1:
            raise InvalidInputError(f"Upper bound must be positive (got {n})")
        return min(int(self.random() * n), n - 1)

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        """Fisher-Yates shuffle of range(n)."""
        order = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def _floats(self, size: int) -> npt.NDArray[np.float64]:
        words = self.next_u64(size)
        return (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
