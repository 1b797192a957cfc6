"""Deterministic seed derivation for replications and nested fits.

Child seeds come from the SplitMix64 finalizer applied to
``master + (counter + 1) * PHI64``.  The scheme is a pure function of
``(master, counter)``, so adding replications never perturbs earlier ones
and worker scheduling cannot influence the stream.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
PHI64 = 0x9E3779B97F4A7C15

# Counters below 2**32 are reserved for replication indices; internal
# consumers (truth MC, nuisance sub-fits) use tagged counters above it.
TAG_TRUTH = 1 << 32
TAG_PROPENSITY = (1 << 32) + 1
TAG_OUTCOME = (1 << 32) + 2
TAG_RLEARNER = (1 << 32) + 3
TAG_ORACLE = (1 << 32) + 4


def split_seed(master: int, counter: int) -> int:
    """Return the 64-bit child seed for ``counter`` under ``master``."""
    if counter < 0:
        raise ValueError("seed counter must be nonnegative")
    z = (master + (counter + 1) * PHI64) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK
