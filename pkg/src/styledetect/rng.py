"""Deterministic randomness and hashing primitives.

Everything that influences reported numbers goes through the SplitMix64
counter generator below rather than platform RNGs, so that runs reproduce
bit-for-bit across machines, interpreter versions, and parallel schedules.

State transition (all arithmetic mod 2**64):

    state' = state + 0x9E3779B97F4A7C15
    z = state'
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

Seeds for sub-tasks (per-domain trials, per-resample bootstrap draws) are
derived with ``derive_seed``, which folds FNV-1a hashes of string keys and
raw integer keys into the state via single SplitMix64 steps.  The derivation
depends only on the key sequence, never on execution order.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    """One SplitMix64 scramble of a 64-bit value."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def fnv1a64(data: bytes | str) -> int:
    """64-bit FNV-1a hash, fixed here for cross-implementation stability."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def derive_seed(seed: int, *keys: int | str) -> int:
    """Mix string/integer keys into a seed; independent of call order elsewhere."""
    state = seed & _MASK64
    for key in keys:
        k = fnv1a64(key) if isinstance(key, str) else key & _MASK64
        state = splitmix64(state ^ k)
    return state


class SplitMix64:
    """Counter-based generator; cheap, seedable, and fully specified."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, bias-free."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = ((1 << 64) // n) * n
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), via partial Fisher-Yates."""
        if not 0 <= k <= n:
            raise ValueError("sample requires 0 <= k <= n")
        idx = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k]

    def choice(self, items: list):
        return items[self.randbelow(len(items))]
