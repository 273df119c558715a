"""Deterministic randomness and per-edge Poisson clocks.

The generator is a counter-based splitmix64 stream: output ``k`` of a stream
seeded with ``s`` is ``mix64(s + k * GOLDEN)``.  Counter-based streams can be
indexed out of order, which lets two endpoints of an edge derive the same ring
times independently, and lets the batch runner produce the exact same draws
as the sequential simulator with vectorized numpy arithmetic.

Sub-stream derivation from a base seed is fixed and documented here:

* clock for edge slot ``s``   -> ``substream_seed(base, CLOCK_SPACE, s)``
* sampling stream             -> ``substream_seed(base, SAMPLE_SPACE, 0)``
* message-delay stream        -> ``substream_seed(base, DELAY_SPACE, 0)``
* run ``r`` of an experiment  -> ``substream_seed(base, RUN_SPACE, r)``
* per-peer seed ``i``         -> ``substream_seed(base, PEER_SPACE, i)``

Decentralized clock construction does not use the slot hash: the two peers
combine their personal seeds by wrapping 64-bit addition, so either endpoint
computes the same combined seed.
"""

from __future__ import annotations

import heapq
import math
from typing import Iterable

import numpy as np

from .errors import ParameterError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Purpose tags for sub-stream derivation (arbitrary fixed odd constants).
CLOCK_SPACE = 0xC1A0C1A0C1A0C1A1
SAMPLE_SPACE = 0x5A3B5A3B5A3B5A3D
DELAY_SPACE = 0xDE1A7DE1A7DE1A71
RUN_SPACE = 0x9B6E9B6E9B6E9B6F
PEER_SPACE = 0x7EE57EE57EE57EE5

_INV_2_53 = 2.0 ** -53


def mix64(x: int) -> int:
    """splitmix64 finalizer: a 64-bit bijective hash."""
    x &= MASK64
    x = (x ^ (x >> 30)) * _MIX1 & MASK64
    x = (x ^ (x >> 27)) * _MIX2 & MASK64
    return x ^ (x >> 31)


def stream_output(seed: int, k: int) -> int:
    """The k-th (k >= 1) raw 64-bit output of the stream seeded with `seed`."""
    return mix64((seed + k * GOLDEN) & MASK64)


def substream_seed(base: int, space: int, index: int) -> int:
    """Derive the seed of a purpose-specific sub-stream of `base`."""
    return mix64(((base ^ space) + (index + 1) * GOLDEN) & MASK64)


def u64_to_unit(word: int) -> float:
    """Map a 64-bit word to a float in [0, 1) using the top 53 bits."""
    return (word >> 11) * _INV_2_53


class PrngState:
    """Cursor over a counter-based 64-bit stream; uniform output in [0, 1)."""

    __slots__ = ("seed", "cursor")

    def __init__(self, seed: int, cursor: int = 0):
        self.seed = seed & MASK64
        self.cursor = cursor

    def next_u64(self) -> int:
        self.cursor += 1
        return stream_output(self.seed, self.cursor)

    def uniform(self) -> float:
        return u64_to_unit(self.next_u64())

    def uniform_int(self, bound: int) -> int:
        """Uniform integer in [0, bound) via the float path (bound << 2^53)."""
        return int(self.uniform() * bound)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1):
            j = i + self.uniform_int(len(items) - i)
            items[i], items[j] = items[j], items[i]

    def block_u64(self, count: int) -> np.ndarray:
        """`count` raw outputs as one vectorized draw; advances the cursor."""
        k = np.arange(self.cursor + 1, self.cursor + count + 1, dtype=np.uint64)
        self.cursor += count
        return mix64_array(np.uint64(self.seed) + k * np.uint64(GOLDEN))

    def substream(self, space: int, index: int) -> "PrngState":
        return PrngState(substream_seed(self.seed, space, index))


def exponential_draw(state: PrngState, rate: float) -> float:
    """Inverse-CDF exponential draw: -ln(1 - u) / rate.  Advances `state`."""
    if rate <= 0:
        raise ParameterError(f"exponential rate must be positive, got {rate}")
    return -math.log1p(-state.uniform()) / rate


# -- vectorized counterparts (bitwise identical to the scalar path) ----------

def _mix64_inplace(x: np.ndarray) -> np.ndarray:
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return x


def mix64_array(x: np.ndarray) -> np.ndarray:
    return _mix64_inplace(x.astype(np.uint64, copy=True))


def substream_seed_array(base: np.ndarray, space: int, index: np.ndarray) -> np.ndarray:
    base = base.astype(np.uint64)
    idx = index.astype(np.uint64)
    return _mix64_inplace((base ^ np.uint64(space)) + (idx + np.uint64(1)) * np.uint64(GOLDEN))


def uniform_matrix(seeds: np.ndarray, count: int) -> np.ndarray:
    """Outputs 1..count of each stream in `seeds`, shape seeds.shape + (count,)."""
    k = np.arange(1, count + 1, dtype=np.uint64)
    raw = seeds[..., None].astype(np.uint64) + k * np.uint64(GOLDEN)
    _mix64_inplace(raw)
    raw >>= np.uint64(11)
    out = raw.astype(np.float64)
    out *= _INV_2_53
    return out


# -- Poisson clocks -----------------------------------------------------------

class SharedClock:
    """Poisson clock over one edge: ring time n is the sum of the first n
    exponential inter-ring intervals drawn from the clock's own stream.

    Ring times are memoized, so they can be queried out of order; the whole
    sequence is a pure function of (seed, rate).
    """

    __slots__ = ("rate", "seed", "_times")

    def __init__(self, seed: int, rate: float):
        if rate <= 0:
            raise ParameterError(f"clock rate must be positive, got {rate}")
        self.rate = rate
        self.seed = seed & MASK64
        self._times = [0.0]

    @property
    def cursor(self) -> int:
        """Number of rings materialized so far."""
        return len(self._times) - 1

    @property
    def current_time(self) -> float:
        """Time of the last materialized ring."""
        return self._times[-1]

    def ring_time(self, index: int) -> float:
        """Time of ring `index`; index 0 is the start of time (0.0)."""
        if index < 0:
            raise ParameterError("ring index must be nonnegative")
        while len(self._times) <= index:
            k = len(self._times)
            u = u64_to_unit(stream_output(self.seed, k))
            self._times.append(self._times[-1] - math.log1p(-u) / self.rate)
        return self._times[index]


def shared_clock_init(seed_i: int, seed_j: int, rate: float) -> SharedClock:
    """Clock both endpoints of an edge can build independently: the combined
    seed is the wrapping 64-bit sum of the two peers' seeds, so the arguments
    commute."""
    return SharedClock((seed_i + seed_j) & MASK64, rate)


class ClockEnsemble:
    """One clock per edge slot, merged into a global nondecreasing event
    stream.  Simultaneous ring times (float collisions) resolve to the lower
    slot index."""

    __slots__ = ("clocks", "_heap", "_cursors")

    def __init__(self, clocks: Iterable[SharedClock]):
        self.clocks = list(clocks)
        if not self.clocks:
            raise ParameterError("ensemble needs at least one clock")
        self._cursors = [1] * len(self.clocks)
        self._heap = [(c.ring_time(1), slot) for slot, c in enumerate(self.clocks)]
        heapq.heapify(self._heap)

    def peek_time(self) -> float:
        return self._heap[0][0]

    def next_event(self) -> tuple[int, float]:
        """Pop the earliest pending ring as (slot, time) and schedule that
        slot's next ring."""
        t, slot = heapq.heappop(self._heap)
        self._cursors[slot] += 1
        heapq.heappush(self._heap, (self.clocks[slot].ring_time(self._cursors[slot]), slot))
        return slot, t


def slot_clocks(master_seed: int, slot_count: int, rate: float) -> list[SharedClock]:
    """Simulation-mode clocks: per-slot seeds hashed from the master seed."""
    return [SharedClock(substream_seed(master_seed, CLOCK_SPACE, s), rate)
            for s in range(slot_count)]


def peer_seed(master_seed: int, peer: int) -> int:
    """Per-peer seed used by the decentralized clock construction."""
    return substream_seed(master_seed, PEER_SPACE, peer)


def build_ensemble(slot_count: int, rate: float, master_seed: int) -> ClockEnsemble:
    """The canonical ensemble shared by every simulator for a given
    (topology, rate, master seed): all modules that claim to consume "the
    same ring stream" construct it through this function."""
    return ClockEnsemble(slot_clocks(master_seed, slot_count, rate))


def decentralized_ensemble(edges: list[tuple[int, int]], rate: float,
                           master_seed: int) -> ClockEnsemble:
    """Ensemble whose per-edge clocks are built from the two endpoints'
    personal seeds by wrapping addition (seed exchange at network setup)."""
    seeds = {}
    clocks = []
    for i, j in edges:
        si = seeds.setdefault(i, peer_seed(master_seed, i))
        sj = seeds.setdefault(j, peer_seed(master_seed, j))
        clocks.append(shared_clock_init(si, sj, rate))
    return ClockEnsemble(clocks)
