"""Counter-based random numbers.

Every uniform in the package is a pure function of
(seed, stream, replica, vertex key, counter), so replicas are reproducible,
independent of evaluation order, and coupled across lattice sizes: the vertex
key hashes the coordinate tuple, not the flat index, so the same site draws
the same uniform in any box that contains it.

The mixer is the splitmix64 finalizer chained over the key words. Uniforms
are mapped to the open interval (0, 1) via ((h >> 11) + 0.5) * 2**-53 so that
log() is always safe.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_COORD_SALT = 0xB5297A4D93F4C1DB

# Stream labels keep draw families disjoint.
STREAM_CONFIG = 0   # static site percolation / initial KCM law
STREAM_CLOCK = 1    # KCM ring times and resample coins
STREAM_AUX = 2      # anything else (shuffles, rejection sampling)

TO_UNIT = 2.0 ** -53


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit word (python ints)."""
    z = (z + _GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def hash_key(seed: int, stream: int, replica: int, vkey: int, counter: int) -> int:
    h = mix64(seed & MASK64)
    h = mix64(h ^ (stream & MASK64))
    h = mix64(h ^ (replica & MASK64))
    h = mix64(h ^ (vkey & MASK64))
    return mix64(h ^ (counter & MASK64))


def uniform(seed: int, stream: int, replica: int, vkey: int, counter: int) -> float:
    """One uniform in (0, 1)."""
    return ((hash_key(seed, stream, replica, vkey, counter) >> 11) + 0.5) * TO_UNIT


def vertex_key(coords) -> int:
    """Size-independent key for a site, hashed from its coordinate tuple."""
    h = mix64(_COORD_SALT)
    for c in coords:
        h = mix64(h ^ (int(c) & MASK64))
    return h


# ---------------------------------------------------------------- numpy batch

def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def vertex_keys_np(coord_cols) -> np.ndarray:
    """Vectorized vertex_key over N sites given per-axis coordinate columns."""
    h = _mix64_np(np.full(len(coord_cols[0]), _COORD_SALT, dtype=np.uint64))
    for col in coord_cols:
        h = _mix64_np(h ^ col.astype(np.uint64))
    return h


def uniforms_np(seed: int, stream: int, replica: int,
                vkeys: np.ndarray, counter: int = 0) -> np.ndarray:
    """Vectorized uniform over an array of vertex keys (one counter)."""
    h = mix64(seed & MASK64)
    h = mix64(h ^ (stream & MASK64))
    h = mix64(h ^ (replica & MASK64))
    h = _mix64_np(np.uint64(h) ^ vkeys)
    h = _mix64_np(h ^ np.uint64(counter & MASK64))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * TO_UNIT


def uniforms_replicas_np(seed: int, stream: int, replicas, vkeys: np.ndarray,
                         counter: int = 0) -> np.ndarray:
    """(R, N) uniforms for a replica batch.

    `replicas` is either an int R (rows 0..R-1) or an array of replica ids.
    """
    if np.isscalar(replicas):
        replicas = np.arange(int(replicas), dtype=np.uint64)
    h = mix64(seed & MASK64)
    h = mix64(h ^ (stream & MASK64))
    hr = _mix64_np(np.uint64(h) ^ np.asarray(replicas).astype(np.uint64))  # (R,)
    hm = _mix64_np(hr[:, None] ^ vkeys[None, :])                  # (R, N)
    hm = _mix64_np(hm ^ np.uint64(counter & MASK64))
    return ((hm >> np.uint64(11)).astype(np.float64) + 0.5) * TO_UNIT
