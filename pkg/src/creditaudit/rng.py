"""Seedable, machine-independent random number generation.

Every stochastic operation in this package (train/test splitting, bootstrap
sampling, feature subsampling, synthetic-row interpolation) draws from the
generators defined here, so results depend only on the recorded 64-bit seeds
and never on platform, process count or library version.

Algorithms (both published, public-domain reference code by Blackman & Vigna,
https://prng.di.unimi.it/):

* ``splitmix64`` — a 64-bit mixing sequence.  One step advances the state by
  the constant ``GOLDEN = 0x9E3779B97F4A7C15`` and returns a scrambled copy
  of the new state.  Used for seed derivation and for initialising xoshiro
  state.
* ``xoshiro256**`` — the main generator.  Its 256-bit state is initialised
  from a 64-bit seed by taking four successive splitmix64 outputs.

Derivation rules used throughout the package:

* ``mix_seed(seed, index)`` — a child seed for component ``index``: the
  splitmix64 output for state ``seed XOR (GOLDEN * (index + 1))``.  Per-tree
  seeds, per-replicate seeds and per-stage seeds are derived this way.
* ``stream_seed(seed, index)`` — the seed of the ``index``-th parallel draw
  stream: ``(seed + index * GOLDEN) mod 2**64``.  Stream 0 is the generator
  seeded at ``seed`` itself.  Synthetic-row generation uses one stream per
  synthetic row so output is independent of evaluation order.

Uniform doubles in [0, 1) take the top 53 bits: ``(next() >> 11) * 2**-53``.
Bounded integer draws are ``floor(uniform() * bound)``.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_DOUBLE_SCALE = 1.0 / (1 << 53)


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state by one step; return (new_state, output)."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return state, z ^ (z >> 31)


def mix_seed(seed: int, index: int) -> int:
    """Derive the child seed for component ``index`` from ``seed``."""
    state = (seed ^ ((GOLDEN * (index + 1)) & MASK64)) & MASK64
    return splitmix64_next(state)[1]


def stream_seed(seed: int, index: int) -> int:
    """Seed of parallel stream ``index``; stream 0 is ``seed`` itself."""
    return (seed + index * GOLDEN) & MASK64


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    """xoshiro256** generator seeded from a 64-bit integer via splitmix64."""

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        state = seed & MASK64
        s = []
        for _ in range(4):
            state, out = splitmix64_next(state)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits of the next output."""
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    def below(self, bound: int) -> int:
        """Integer in [0, bound) as floor(uniform() * bound)."""
        return int(self.uniform() * bound)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by ``below``."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
