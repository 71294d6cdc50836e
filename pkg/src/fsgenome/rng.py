"""SplitMix64: the fixed 64-bit generator behind every simulated installation.

State transition and output, all arithmetic mod 2**64::

    state  = state + 0x9E3779B97F4A7C15
    z      = state
    z      = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z      = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

``random()`` returns ``(next_u64() >> 11) * 2**-53`` and ``below(n)``
returns ``next_u64() % n``. Any implementation following these lines
reproduces the same simulated genomes bit for bit.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """Seed of installation ``index`` in a corpus: ``mix64(base + (index + 1) * GOLDEN)``."""
    return mix64((base_seed + (index + 1) * GOLDEN) & MASK64)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n
