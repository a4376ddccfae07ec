"""Portable seeded random numbers for reproducible test corpora.

The generator is the 64-bit linear congruential recurrence

    x ← 6364136223846793005·x + 1442695040888963407  (mod 2⁶⁴)

and a uniform draw in [0, 1) is (x >> 11)·2⁻⁵³, taken after advancing the
state. Any language with unsigned 64-bit arithmetic reproduces the same
stream bit for bit, which numpy's generators do not promise.
"""

from dataclasses import dataclass

MULTIPLIER = 6364136223846793005
INCREMENT = 1442695040888963407
MASK = (1 << 64) - 1


@dataclass
class Lcg:
    """Linear congruential generator state."""

    state: int

    def __post_init__(self) -> None:
        """Reduce the seed to 64 bits."""
        self.state &= MASK

    def next_u64(self) -> int:
        """Advance and return the raw 64-bit state."""
        self.state = (MULTIPLIER * self.state + INCREMENT) & MASK
        return self.state

    def uniform(self) -> float:
        """Draw from [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_range(self, low: float, high: float) -> float:
        """Draw from [low, high)."""
        return low + (high - low) * self.uniform()
