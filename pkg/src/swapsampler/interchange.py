"""Particle-interchange oracle: transpositions, trajectory simulation, and
exact transient distributions.

k labeled particles sit on distinct nodes of a fixed graph; a ring on an edge
transposes whatever particles occupy its endpoints.  Fed with the same ring
stream as the swap protocol (same topology, rate, and master seed), the
k = n case reproduces the protocol's peer placement exactly, which makes this
module an independent cross-check of the main simulator rather than a
re-export of it.

Exact transients use uniformization: with generator Q (unit rate per edge)
and r = |E|, the distribution at time t is the Poisson(r t)-weighted mixture
of powers of the stochastic matrix I + Q/r.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path

import numpy as np
from scipy import sparse

from . import clocks
from .errors import ParameterError, StateSpaceTooLarge
from .ideal import final_permutations
from .topology import Topology

_STATE_GUARD = 20000
_POISSON_TAIL = 1e-12


def transpose(edge: tuple[int, int], v: int) -> int:
    """Swap the two endpoints of `edge`, fix everything else."""
    i, j = edge
    if v == i:
        return j
    if v == j:
        return i
    return v


def ip_apply(x: tuple[int, ...], edge: tuple[int, int]) -> tuple[int, ...]:
    """Coordinatewise transposition of a particle state."""
    return tuple(transpose(edge, v) for v in x)


def _check_state(n: int, x0: tuple[int, ...]) -> None:
    if len(set(x0)) != len(x0):
        raise ParameterError(f"particle positions must be distinct, got {x0}")
    if any(not 0 <= v < n for v in x0):
        raise ParameterError(f"positions out of range for n={n}: {x0}")


def ip_simulate(k: int, topology: Topology, x0: tuple[int, ...], rate: float,
                master_seed: int, horizon: float) -> tuple[int, ...]:
    """Final particle positions after consuming the canonical ring stream
    for (topology, rate, master_seed) up to the horizon."""
    if k != len(x0):
        raise ParameterError(f"k={k} does not match |x0|={len(x0)}")
    if k > topology.n:
        raise ParameterError(f"cannot place {k} particles on {topology.n} nodes")
    _check_state(topology.n, x0)
    ensemble = clocks.build_ensemble(len(topology.edges), rate, master_seed)
    pos = list(x0)
    where = {v: i for i, v in enumerate(x0)}
    edges = topology.edges
    while ensemble.peek_time() <= horizon:
        slot, _ = ensemble.next_event()
        a, b = edges[slot]
        pa, pb = where.get(a), where.get(b)
        if pa is not None:
            pos[pa] = b
            where[b] = pa
            if pb is None:
                del where[a]
        if pb is not None:
            pos[pb] = a
            where[a] = pb
            if pa is None:
                del where[b]
    return tuple(pos)


def rw_simulate(topology: Topology, v0: int, rate: float, master_seed: int,
                horizon: float) -> int:
    """Single random-walk particle; only rings on edges at the current node
    move it.  Identical trajectory to a one-particle interchange over the
    same stream."""
    return ip_simulate(1, topology, (v0,), rate, master_seed, horizon)[0]


def enumerate_states(n: int, k: int) -> list[tuple[int, ...]]:
    """All ordered k-tuples of distinct nodes, lexicographic."""
    size = math.perm(n, k)
    if size > _STATE_GUARD:
        raise StateSpaceTooLarge(
            f"state space has {size} > {_STATE_GUARD} states; "
            "use the empirical estimator instead")
    return list(permutations(range(n), k))


@dataclass(frozen=True)
class TransientDistribution:
    states: list[tuple[int, ...]]
    probabilities: np.ndarray
    time: float

    def __post_init__(self):
        total = float(self.probabilities.sum())
        if not (self.probabilities >= -1e-15).all() or abs(total - 1.0) > 1e-9:
            raise ParameterError(f"probabilities must sum to 1, got {total}")

    def tv_to_uniform(self) -> float:
        u = 1.0 / len(self.states)
        return 0.5 * float(np.abs(self.probabilities - u).sum())


def _generator(topology: Topology, states: list[tuple[int, ...]]) -> sparse.csr_matrix:
    index = {s: i for i, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for i, x in enumerate(states):
        out = 0
        for e in topology.edges:
            y = ip_apply(x, e)
            if y != x:
                rows.append(i)
                cols.append(index[y])
                vals.append(1.0)
                out += 1
        rows.append(i)
        cols.append(i)
        vals.append(-float(out))
    size = len(states)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


def _poisson_log_weights(lam: float) -> tuple[int, np.ndarray]:
    """Weights of Poisson(lam) on a window capturing all but ~1e-12 mass;
    returns (first index, weights)."""
    if lam <= 0:
        return 0, np.array([1.0])
    spread = 10.0 * math.sqrt(lam) + 30.0
    lo = max(0, int(lam - spread))
    hi = int(lam + spread) + 1
    j = np.arange(lo, hi + 1, dtype=float)
    logw = j * math.log(lam) - lam - np.array([math.lgamma(v + 1.0) for v in j])
    w = np.exp(logw)
    return lo, w


def exact_transient(k: int, topology: Topology, x0: tuple[int, ...],
                    horizon: float) -> TransientDistribution:
    """Exact distribution of the k-particle state at the horizon (unit clock
    rate; scale the horizon by the rate for other clocks)."""
    if k != len(x0):
        raise ParameterError(f"k={k} does not match |x0|={len(x0)}")
    _check_state(topology.n, x0)
    states = enumerate_states(topology.n, k)
    index = {s: i for i, s in enumerate(states)}
    if horizon < 0:
        raise ParameterError("horizon must be nonnegative")
    q = _generator(topology, states)
    r = float(len(topology.edges))
    p_stoch = sparse.identity(len(states), format="csr") + q / r
    lo, weights = _poisson_log_weights(r * horizon)
    v = np.zeros(len(states))
    v[index[x0]] = 1.0
    acc = np.zeros(len(states))
    if lo == 0:
        acc += weights[0] * v
    for j in range(1, lo + len(weights)):
        v = p_stoch.T @ v
        if j >= lo:
            acc += weights[j - lo] * v
    acc = np.maximum(acc, 0.0)
    acc /= acc.sum()
    return TransientDistribution(states, acc, horizon)


def stationary_distribution(k: int, topology: Topology) -> np.ndarray:
    """Stationary distribution solved from the generator (least squares on
    pi Q = 0 with sum(pi) = 1); uniform for these symmetric chains, but
    computed rather than assumed so it can serve as a check."""
    states = enumerate_states(topology.n, k)
    size = len(states)
    if size > 2000:
        raise StateSpaceTooLarge(
            f"dense stationary solve capped at 2000 states, got {size}")
    q = _generator(topology, states).toarray()
    system = np.vstack([q.T, np.ones((1, size))])
    target = np.zeros(size + 1)
    target[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, target, rcond=None)
    return pi


def empirical_tv_to_uniform(k: int, topology: Topology, x0: tuple[int, ...],
                            rate: float, horizon: float, run_count: int,
                            master_seed: int) -> float:
    """Plug-in Monte-Carlo estimate of the total variation distance between
    the time-`horizon` state distribution and uniform, from `run_count`
    independent trajectories."""
    if run_count < 1:
        raise ParameterError("run_count must be at least 1")
    _check_state(topology.n, x0)
    size = math.perm(topology.n, k)
    run_seeds = np.array(
        [clocks.substream_seed(master_seed, clocks.RUN_SPACE, r)
         for r in range(run_count)], dtype=np.uint64)
    sigma = final_permutations(topology, rate, horizon, run_seeds)
    gamma = np.argsort(sigma, axis=1)
    endpoints = gamma[:, list(x0)]
    counts: dict[tuple[int, ...], int] = {}
    for row in endpoints:
        key = tuple(int(v) for v in row)
        counts[key] = counts.get(key, 0) + 1
    u = 1.0 / size
    seen = sum(abs(c / run_count - u) for c in counts.values())
    unseen = (size - len(counts)) * u
    return 0.5 * (seen + unseen)


def write_transient_csv(dist: TransientDistribution, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state_tuple", "probability"])
        for state, p in zip(dist.states, dist.probabilities):
            writer.writerow(["-".join(str(v) for v in state), f"{p:.12g}"])
