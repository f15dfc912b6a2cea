"""Pinned deterministic random streams.

Every random draw in this package comes from a SplitMix64 stream derived
from a (seed, label) pair, so any run is reproducible from its seed alone
and any other implementation can replay the exact integer streams.

Generator contract
------------------
* State update: ``state = (state + 0x9E3779B97F4A7C15) mod 2**64``.
* Output mix of the updated state::

      z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9  (mod 2**64)
      z ^= z >> 27;  z *= 0x94D049BB133111EB  (mod 2**64)
      z ^= z >> 31

* Stream derivation: the initial state for ``Stream(seed, label)`` is
  ``fnv1a64(utf8(label)) XOR (seed mod 2**64)`` where fnv1a64 is the
  standard 64-bit FNV-1a hash (offset 0xcbf29ce484222325, prime 0x100000001b3).

Float derivations (all computed in IEEE-754 double precision):

* uniform in [0, 1): ``(next_u64() >> 11) * 2**-53``.
* standard normals: Box-Muller on consecutive uniform pairs
  ``(u1, u2)``: ``r = sqrt(-2*ln(1 - u1))``, ``g0 = r*cos(2*pi*u2)``,
  ``g1 = r*sin(2*pi*u2)``.  Arrays are filled row-major with the
  interleaved pair outputs ``g0, g1, g0, g1, ...``; when an odd count is
  requested the final sine companion is discarded.  No pair state is kept
  between calls.
* shuffle: Fisher-Yates from the top, ``j = next_u64() mod (i + 1)``.

The integer stream is exactly portable; float streams are portable up to
libm ulp differences in ln/cos/sin.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_U64_GOLDEN = np.uint64(_GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _mix64(z: int) -> int:
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z ^ (z >> _S30)
        z = z * _M1
        z = z ^ (z >> _S27)
        z = z * _M2
        z = z ^ (z >> _S31)
    return z


class Stream:
    """One labeled SplitMix64 stream.

    Scalar and array methods consume the same underlying integer sequence;
    ``uniform_array(n)`` advances the state exactly n steps.
    """

    def __init__(self, seed: int, label: str):
        self.seed = seed
        self.label = label
        self._state = fnv1a64(label.encode("utf-8")) ^ (seed & _MASK64)

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def _next_block(self, n: int) -> np.ndarray:
        """Vectorized batch of n outputs (state advances additively)."""
        with np.errstate(over="ignore"):
            ks = np.arange(1, n + 1, dtype=np.uint64) * _U64_GOLDEN
            ks += np.uint64(self._state)
        self._state = (self._state + n * _GOLDEN) & _MASK64
        return _mix64_array(ks)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        bits = self._next_block(n) >> np.uint64(11)
        return (bits.astype(np.float64) * 2.0**-53).reshape(shape)

    def uniform_range(self, low: float, high: float, shape) -> np.ndarray:
        return low + (high - low) * self.uniform_array(shape)

    def normal(self) -> float:
        return float(self.normal_array(1)[0])

    def normal_array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        pairs = (n + 1) // 2
        u = self.uniform_array(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = (2.0 * math.pi) * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n].reshape(shape)

    def randint_below(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def shuffle(self, values: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(values) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            values[i], values[j] = values[j], values[i]

    def permutation(self, n: int) -> list[int]:
        values = list(range(n))
        self.shuffle(values)
        return values
