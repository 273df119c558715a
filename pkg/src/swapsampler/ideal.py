"""Instantaneous-swap protocol: neighborhood exchange on every clock ring.

Each ring on an edge slot atomically swaps the two peers currently sharing
that slot's clock: the pair exchange entire neighbor lists (with the mutual
entries fixed up), every third-party list relabels the pair, and clock slots
travel with the entries.  The net effect on the fixed initial graph is a
transposition, tracked incrementally in two mutually inverse arrays:

* ``gamma``: peer -> current position on the initial graph,
* ``sigma``: position -> peer currently there (so the live edge set is the
  sigma-relabeled initial edge set).

A numpy batch runner (`final_permutations`) reproduces the exact per-run end
state of the event-driven simulator for many runs at once; the two paths
draw bitwise-identical ring streams from the counter-based clock seeds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import clocks
from .clocks import ClockEnsemble, PrngState
from .errors import InvariantError, ParameterError
from .topology import Permutation, Topology


@dataclass(frozen=True)
class SwapRecord:
    time: float
    slot: int
    peer_a: int
    peer_b: int


class IdealRun:
    """Live protocol state for one seeded run."""

    def __init__(self, topology: Topology, rate: float, master_seed: int,
                 ensemble: ClockEnsemble | None = None):
        self.topology = topology
        self.rate = rate
        self.master_seed = master_seed
        self.ensemble = ensemble if ensemble is not None else clocks.build_ensemble(
            len(topology.edges), rate, master_seed)
        # neighbor view: per peer, {neighbor id: shared edge slot}
        self.neighbors: list[dict[int, int]] = [dict() for _ in range(topology.n)]
        for slot, (i, j) in enumerate(topology.edges):
            self.neighbors[i][j] = slot
            self.neighbors[j][i] = slot
        self.gamma = list(range(topology.n))
        self.sigma = list(range(topology.n))
        self.now = 0.0
        self.swap_count = 0
        self._sample_rng = PrngState(
            clocks.substream_seed(master_seed, clocks.SAMPLE_SPACE, 0))

    def neighborhood(self, peer: int) -> set[int]:
        return set(self.neighbors[peer])

    def apply_swap(self, slot: int, at: float) -> SwapRecord:
        """Execute the atomic four-step exchange for a ring on `slot`."""
        a, b = self.topology.edges[slot]
        i, j = self.sigma[a], self.sigma[b]
        ni, nj = self.neighbors[i], self.neighbors[j]
        if ni.get(j) != slot or nj.get(i) != slot:
            raise InvariantError(
                f"slot {slot} holders {i},{j} are not mutually adjacent via it")
        # Third parties replace i <-> j, keeping each entry's slot.  Removals
        # happen before insertions so a common neighbor's two entries swap
        # labels instead of colliding.
        moves = []
        for k, s in ni.items():
            if k != j:
                moves.append((k, i, j, s))
        for k, s in nj.items():
            if k != i:
                moves.append((k, j, i, s))
        for k, old, _, _ in moves:
            del self.neighbors[k][old]
        for k, _, new, s in moves:
            self.neighbors[k][new] = s
        # The pair adopt each other's lists, with the mutual entry fixed up.
        self.neighbors[i] = {(j if k == i else k): s for k, s in nj.items()}
        self.neighbors[j] = {(i if k == j else k): s for k, s in ni.items()}
        # Track the transposition on the fixed graph.
        self.sigma[a], self.sigma[b] = j, i
        self.gamma[i], self.gamma[j] = b, a
        self.now = at
        self.swap_count += 1
        return SwapRecord(at, slot, i, j)

    def run_until(self, horizon: float) -> list[SwapRecord]:
        """Process every ring with time <= horizon, in time order."""
        if horizon < self.now:
            raise ParameterError("horizon precedes current time")
        log = []
        while self.ensemble.peek_time() <= horizon:
            slot, t = self.ensemble.next_event()
            log.append(self.apply_swap(slot, t))
        self.now = horizon
        return log

    def sample(self, peer: int, size: int, rng: PrngState | None = None) -> tuple[int, ...]:
        """Uniform ordered tuple of `size` distinct current neighbors."""
        pool = sorted(self.neighbors[peer])
        if not 1 <= size <= len(pool):
            raise ParameterError(
                f"sample size {size} out of range 1..{len(pool)} for peer {peer}")
        rng = rng if rng is not None else self._sample_rng
        for i in range(size):
            j = i + rng.uniform_int(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return tuple(pool[:size])

    def tracked_permutation(self) -> Permutation:
        """gamma: peer -> current position on the initial graph."""
        return Permutation(tuple(self.gamma))

    def placement(self) -> tuple[int, ...]:
        """Position of every peer, indexed by peer id (== gamma)."""
        return tuple(self.gamma)


def write_swap_log(records: list[SwapRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "slot", "peer_a", "peer_b"])
        for r in records:
            writer.writerow([f"{r.time:.9g}", r.slot, r.peer_a, r.peer_b])


# -- batch fast path ----------------------------------------------------------

def _ring_column_bound(mean_rings: float) -> int:
    return int(mean_rings + 4.0 * mean_rings ** 0.5 + 8.0)


def ring_slot_sequences(topology: Topology, rate: float, horizon: float,
                        run_seeds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merged ring streams for a batch of runs.

    Returns (slots, times): `slots[r]` holds run r's ringing edge slots in
    time order, padded with the sentinel value len(edges); `times[r]` the
    matching ring times, padded with +inf.  Matches the sequential ensemble
    stream exactly, including the lower-slot tie-break.
    """
    m = len(topology.edges)
    runs = np.asarray(run_seeds, dtype=np.uint64)
    cols = _ring_column_bound(rate * horizon)
    while True:
        slot_seeds = clocks.substream_seed_array(
            runs[:, None], clocks.CLOCK_SPACE, np.arange(m)[None, :])
        u = clocks.uniform_matrix(slot_seeds, cols)          # (R, m, cols)
        np.log1p(-u, out=u)
        u /= -rate
        times = np.cumsum(u, axis=2)
        if not np.any(times[:, :, -1] <= horizon):
            break
        cols *= 2  # a slot may still ring within the horizon: widen and redo
    live = times <= horizon
    counts = live.sum(axis=(1, 2)).astype(np.int64)
    flat = times.reshape(len(runs), m * cols)
    flat[~live.reshape(len(runs), m * cols)] = np.inf
    order = np.argsort(flat, axis=1, kind="stable")  # flat index = slot*cols + k
    width = int(counts.max()) if len(counts) else 0
    order = order[:, :width]
    slots = (order // cols).astype(np.int64)
    sorted_times = np.take_along_axis(flat, order, axis=1)
    pad = np.arange(width)[None, :] >= counts[:, None]
    slots[pad] = m
    sorted_times[pad] = np.inf
    return slots, sorted_times


def final_permutations_multi(topology: Topology, rate: float,
                             horizons: list[float], run_seeds: np.ndarray,
                             chunk_bytes: int = 256 * 1024 * 1024,
                             ) -> dict[float, np.ndarray]:
    """Position -> peer permutation (sigma) for each run at every horizon.

    Equivalent to running `IdealRun.run_until(h)` per seed and reading its
    sigma; computed by composing ring transpositions in lockstep across
    runs.  The ring stream is generated once at the largest horizon and cut
    per horizon, exactly as the monotone event simulator would see it.
    """
    if not horizons or any(h < 0 for h in horizons):
        raise ParameterError("need nonnegative horizons")
    top = float(max(horizons))
    m = len(topology.edges)
    n = topology.n
    runs = np.asarray(run_seeds, dtype=np.uint64)
    cols = _ring_column_bound(rate * top)
    chunk = max(1, int(chunk_bytes // (m * cols * 8 * 3)))
    # Sentinel slot m maps to the no-op edge (0, 0).
    end_a = np.array([e[0] for e in topology.edges] + [0], dtype=np.int64)
    end_b = np.array([e[1] for e in topology.edges] + [0], dtype=np.int64)
    sigma = {h: np.empty((len(runs), n), dtype=np.int64) for h in horizons}
    for lo in range(0, len(runs), chunk):
        part = runs[lo:lo + chunk]
        slots, times = ring_slot_sequences(topology, rate, top, part)
        rows = np.arange(len(part))
        for h in sorted(horizons):
            counts = (times <= h).sum(axis=1)
            width = int(counts.max()) if len(counts) else 0
            cut = slots[:, :width].copy()
            cut[np.arange(width)[None, :] >= counts[:, None]] = m
            sig = np.tile(np.arange(n, dtype=np.int64), (len(part), 1))
            ae = end_a[cut]
            be = end_b[cut]
            for step in range(width):
                a = ae[:, step]
                b = be[:, step]
                va = sig[rows, a]
                vb = sig[rows, b]
                sig[rows, a] = vb
                sig[rows, b] = va
            sigma[h][lo:lo + chunk] = sig
    return sigma


def final_permutations(topology: Topology, rate: float, horizon: float,
                       run_seeds: np.ndarray,
                       chunk_bytes: int = 256 * 1024 * 1024) -> np.ndarray:
    """Single-horizon convenience wrapper around `final_permutations_multi`."""
    return final_permutations_multi(
        topology, rate, [horizon], run_seeds, chunk_bytes)[horizon]


def final_neighborhoods(topology: Topology, sigma: np.ndarray,
                        observed: int) -> np.ndarray:
    """Sorted final neighborhood of `observed` for each run in the batch."""
    if not topology.is_regular():
        raise ParameterError("batch neighborhood extraction needs a regular graph")
    gamma = np.argsort(sigma, axis=1)
    pos = gamma[:, observed]
    nbr_matrix = np.array(topology.adjacency, dtype=np.int64)  # (n, d)
    picked = nbr_matrix[pos]                                   # (R, d)
    occupants = np.take_along_axis(sigma, picked, axis=1)
    occupants.sort(axis=1)
    return occupants


def sample_one_neighbor(topology: Topology, sigma: np.ndarray, observed: int,
                        run_seeds: np.ndarray) -> np.ndarray:
    """Single uniformly sampled neighbor per run, matching
    `IdealRun.sample(observed, 1)` draw for draw."""
    occupants = final_neighborhoods(topology, sigma, observed)
    runs = np.asarray(run_seeds, dtype=np.uint64)
    sample_seeds = clocks.substream_seed_array(
        runs, clocks.SAMPLE_SPACE, np.zeros(len(runs), dtype=np.uint64))
    u = clocks.uniform_matrix(sample_seeds, 1)[:, 0]
    idx = (u * occupants.shape[1]).astype(np.int64)
    return occupants[np.arange(len(runs)), idx]
