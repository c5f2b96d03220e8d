"""Per-particle random streams.

Every particle owns an independent Philox counter-based generator whose
128-bit key is derived from the master seed and the particle index:

    mix(x)      = splitmix64 finalizer (see ``splitmix64`` below)
    key(s, i)   = mix(mix(s) XOR i)  |  mix(mix(s XOR GOLDEN) XOR i) << 64

with all arithmetic modulo 2**64 and ``GOLDEN = 0x9E3779B97F4A7C15``.  The
streams therefore depend only on ``(seed, i)``, never on the number of
particles or on how work is split across threads.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    """SplitMix64 output function applied to state ``x``.

    z = x + GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)
    """
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed, index):
    seed &= MASK64
    lo = splitmix64(splitmix64(seed) ^ index)
    hi = splitmix64(splitmix64(seed ^ GOLDEN) ^ index)
    return (hi << 64) | lo


def particle_generator(seed, index):
    return np.random.Generator(np.random.Philox(key=stream_key(seed, index)))


def particle_generators(seed, n):
    return [particle_generator(seed, i) for i in range(n)]
