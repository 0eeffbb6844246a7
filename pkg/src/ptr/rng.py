"""Portable deterministic randomness for sampling protocols.

The few-shot sampler and the synthetic corpus generator must regenerate
identical outputs on every platform and Python version, so they avoid both
``random`` and NumPy generators and use splitmix64, a tiny PRNG whose full
algorithm fits below.  State update: add the 64-bit golden-gamma constant;
output: two xor-shift-multiply mixing rounds.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(value: int) -> int:
    """One splitmix64 output round; also used to fold strings into seeds."""
    z = (value + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def fold_string(seed: int, text: str) -> int:
    """Derive a sub-seed from ``seed`` and a label such as a class name."""
    h = seed & _MASK64
    for byte in text.encode("utf-8"):
        h = mix64(h ^ byte)
    return h


class SplitMix64:
    """Sequential splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Unbiased draw from [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            draw = self.next_u64()
            if draw <= limit:
                return draw % n

    def shuffle_prefix(self, items: list, k: int) -> list:
        """Partial Fisher-Yates: after the call, items[:k] is a uniform
        k-subset of the input in uniform order.  Mutates and returns items."""
        n = len(items)
        for i in range(min(k, n - 1)):
            j = i + self.below(n - i)
            items[i], items[j] = items[j], items[i]
        return items

    def choice(self, items):
        return items[self.below(len(items))]
