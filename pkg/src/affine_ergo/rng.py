"""Counter-based RNG streams for reproducible parallel Monte Carlo.

Paths are processed in fixed-size chunks; each (seed, chunk, stream) triple
keys an independent Philox stream, so results are bit-identical for any
worker-thread count: scheduling only changes *when* a chunk runs, never
which stream it consumes.
"""

from __future__ import annotations

import numpy as np

CHUNK_SIZE = 8192

# stream ids within a chunk
W0, W1, W2 = 0, 1, 2
N_COUNT, N_JUMP = 3, 4
M_COUNT, M_JUMP = 5, 6
D_W, DM_COUNT, DM_JUMP = 7, 8, 9
GAUSS_APPROX = 10
_N_STREAMS = 16


def stream(seed: int, chunk: int, stream_id: int) -> np.random.Generator:
    key = (int(seed) << 64) | (int(chunk) * _N_STREAMS + int(stream_id))
    return np.random.Generator(np.random.Philox(key=key))


def substream_set(seed: int, chunk: int) -> dict[int, np.random.Generator]:
    return {sid: stream(seed, chunk, sid) for sid in range(_N_STREAMS)}


def derive_seed(seed: int, tag: int) -> int:
    """Independent top-level seed for auxiliary ensembles (e.g. the
    stationary proxy), splitmix-style."""
    x = (int(seed) ^ (0x9E3779B97F4A7C15 * (tag + 1))) & ((1 << 64) - 1)
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & ((1 << 64) - 1)
    x ^= x >> 27
    return x
