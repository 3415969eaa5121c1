"""
Counter-Based Random Streams
============================
Randomness for AUTO-ID nonces, randomized phase offsets and message
payloads. Each stream is a Philox generator (a counter-based bit generator)
keyed by (run seed, stream id); draws advance the stream's counter. A
board's sequence therefore depends only on the seed and its own stream id,
never on how events from different boards interleave.
"""

from typing import Dict

import numpy as np
import scipy.stats as stats

SEED_MASK = (1 << 64) - 1

# Stream ids
STREAM_PHASE = 1
STREAM_PAYLOAD = 2
STREAM_AUTOID_BASE = 0x100   # + board port index


class CounterRng:
    def __init__(self, seed: int):
        self.seed = int(seed) & SEED_MASK
        self._streams: Dict[int, np.random.Generator] = {}

    def stream(self, stream_id: int) -> np.random.Generator:
        gen = self._streams.get(stream_id)
        if gen is None:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(int(stream_id),))
            gen = np.random.Generator(np.random.Philox(seq))
            self._streams[stream_id] = gen
        return gen

    def draw(self, stream_id: int, width: int) -> int:
        """Next unsigned value of `width` bits (1-64) from a stream."""
        if not 1 <= width <= 64:
            raise ValueError(f"width must be in [1, 64], got {width}")
        value = self.stream(stream_id).integers(0, (1 << width) - 1, endpoint=True, dtype=np.uint64)
        return int(value)

    def draw_many(self, stream_id: int, width: int, count: int) -> np.ndarray:
        if not 1 <= width <= 64:
            raise ValueError(f"width must be in [1, 64], got {width}")
        return self.stream(stream_id).integers(0, (1 << width) - 1, size=count, endpoint=True, dtype=np.uint64)

    def draw_range(self, stream_id: int, low: int, high: int) -> int:
        """Uniform integer in [low, high], inclusive."""
        return int(self.stream(stream_id).integers(low, high, endpoint=True, dtype=np.int64))


def rng_draw(rng: CounterRng, stream_id: int, width: int) -> int:
    """Next `width`-bit value of one stream; other streams are untouched."""
    return rng.draw(stream_id, width)


def stream_independence_pvalue(
    rng: CounterRng,
    stream_a: int,
    stream_b: int,
    n_draws: int = 100_000,
    n_bins: int = 16,
) -> float:
    """
    Chi-square test of independence between two streams' paired draws,
    binned into n_bins x n_bins cells. A small p-value means correlated.
    """
    a = rng.draw_many(stream_a, 16, n_draws) % n_bins
    b = rng.draw_many(stream_b, 16, n_draws) % n_bins
    table = np.zeros((n_bins, n_bins), dtype=np.int64)
    np.add.at(table, (a.astype(np.int64), b.astype(np.int64)), 1)
    _, p_value, _, _ = stats.chi2_contingency(table)
    return float(p_value)
