"""Counter-based random streams.

Every replica (path) gets its own stream keyed by ``(seed, replica)``.
A stream is the splitmix64 counter sequence

    u64(i) = mix(s0 + (i+1) * GOLDEN),        s0 = stream_origin(seed, replica)

so draw *i* of a replica depends only on the key and the counter, never on
how replicas are batched over threads.  The same integer recurrence is
implemented three ways — pure-Python scalar (reference), numpy vectorized
(fallback backend) and inside the numba kernels — and produces bit-identical
uint64 sequences in all three.

Floating-point outputs are derived per draw with fixed formulas:
uniform = ((x >> 11) + 1) * 2^-53 in (0, 1]; a normal consumes two counters
(Box-Muller, cosine branch only, sine discarded) so that scalar and
vectorized code stay in counter lockstep.
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SALT = 0xD6E8FEB86659FD93
_INV53 = 2.0**-53

_U64_GOLDEN = np.uint64(GOLDEN)
_U64_SALT = np.uint64(SALT)


def mix64(z: int) -> int:
    """splitmix64 output function on a 64-bit integer."""
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def stream_origin(seed: int, replica: int) -> int:
    """Origin state s0 of the (seed, replica) stream."""
    return mix64(mix64((seed & MASK) ^ SALT) + (replica & MASK) * GOLDEN)


def raw_u64(origin: int, counter: int) -> int:
    """Draw `counter` (0-based) of the stream with origin state `origin`."""
    return mix64(origin + (counter + 1) * GOLDEN)


def u01(x: int) -> float:
    """Map a raw u64 draw to a uniform in (0, 1]."""
    return ((x >> 11) + 1) * _INV53


class ScalarStream:
    """Sequential view of one replica's stream (reference implementation)."""

    def __init__(self, seed: int, replica: int = 0):
        self.origin = stream_origin(seed, replica)
        self.counter = 0

    def next_u64(self) -> int:
        x = raw_u64(self.origin, self.counter)
        self.counter += 1
        return x

    def uniform(self) -> float:
        return u01(self.next_u64())

    def exponential(self) -> float:
        return -np.log(self.uniform())

    def normal(self) -> float:
        # Two counters per normal; cosine branch only (see module docstring).
        u1 = self.uniform()
        u2 = self.uniform()
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


# ---------------------------------------------------------------------------
# Vectorized forms.  All arithmetic stays in uint64 (numpy wraps silently).
# ---------------------------------------------------------------------------

def _vec_mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def vec_origins(seed: int, replicas: np.ndarray) -> np.ndarray:
    """Stream origins for an array of replica indices."""
    reps = replicas.astype(np.uint64)
    s = np.uint64(mix64((seed & MASK) ^ SALT))
    return _vec_mix(s + reps * _U64_GOLDEN)


def vec_raw(origins: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Lockstep draws: one u64 per (origin, counter) pair."""
    return _vec_mix(origins + (counters.astype(np.uint64) + np.uint64(1)) * _U64_GOLDEN)


def vec_u01(raw: np.ndarray) -> np.ndarray:
    return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53


def uniforms(seed: int, replica: int, start: int, count: int) -> np.ndarray:
    """`count` consecutive uniforms of one stream, starting at counter `start`."""
    origin = np.uint64(stream_origin(seed, replica))
    counters = np.arange(start, start + count, dtype=np.uint64)
    return vec_u01(_vec_mix(origin + (counters + np.uint64(1)) * _U64_GOLDEN))


def normals(seed: int, replica: int, start: int, count: int) -> np.ndarray:
    """`count` normals consuming counters [start, start + 2*count)."""
    u = uniforms(seed, replica, start, 2 * count)
    return np.sqrt(-2.0 * np.log(u[0::2])) * np.cos(2.0 * np.pi * u[1::2])
