"""Deterministic seed derivation.

Every stochastic component in the package draws from a numpy PCG64
generator whose seed is derived from a user-facing master seed with
``mix_seed``. The mixing rule is a chained SplitMix64 finalizer: stable,
documented, and independent of Python's per-process hash randomization.
Changing it would silently change every generated dataset, so treat the
constants below as frozen.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1

# Domain tags keep unrelated consumers of the same master seed on
# disjoint streams. Append only; never renumber.
TAG_SAMPLE = 0x01
TAG_EXPERIMENT_JITTER = 0x02
TAG_SHUFFLE = 0x03
TAG_SPLIT_NET = 0x04
TAG_SPLIT_TRAIN = 0x05


def splitmix64(z: int) -> int:
    """One SplitMix64 finalization round (Steele et al. mixing constants)."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed.

    Folding is order-sensitive: ``mix_seed(a, b) != mix_seed(b, a)`` in
    general, which is what keeps (seed, tag, index) hierarchies apart.
    Negative parts are reduced modulo 2**64 first.
    """
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK64))
    return h
