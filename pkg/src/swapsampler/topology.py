"""Communication graphs: generation, spectral analysis, and relabeling.

The fixed initial graph is undirected with indexed edge slots; slot indices
are what clocks and the protocol state machines refer to.  Generation uses
the pairing (configuration) model with a full restart whenever a pairing
produces a self-loop, a duplicate edge, or a disconnected graph, which keeps
the accepted sample uniform over simple connected regular graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .clocks import GOLDEN, MASK64, PrngState, mix64
from .errors import ParameterError


@dataclass(frozen=True)
class Permutation:
    """A bijection on node indices 0..n-1."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        n = len(self.mapping)
        if sorted(self.mapping) != list(range(n)):
            raise ParameterError("mapping is not a bijection on 0..n-1")

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    def __call__(self, v: int) -> int:
        return self.mapping[v]

    def __len__(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for i, v in enumerate(self.mapping):
            inv[v] = i
        return Permutation(tuple(inv))

    def is_identity(self) -> bool:
        return all(v == i for i, v in enumerate(self.mapping))


class Topology:
    """Undirected simple connected graph with stable edge-slot indices.

    Direct construction accepts any connected simple graph (degree
    regularity is enforced only by the generator and the file loader, so
    irregular graphs can be built for structural use).
    """

    def __init__(self, n: int, edges: list[tuple[int, int]]):
        if n < 2:
            raise ParameterError(f"need at least 2 nodes, got {n}")
        seen = set()
        canon: list[tuple[int, int]] = []
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ParameterError(f"edge ({i}, {j}) out of range for n={n}")
            if i == j:
                raise ParameterError(f"self-loop at node {i}")
            e = (i, j) if i < j else (j, i)
            if e in seen:
                raise ParameterError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        self.n = n
        self.edges = canon
        self.degrees = [0] * n
        for i, j in canon:
            self.degrees[i] += 1
            self.degrees[j] += 1
        if not self._connected():
            raise ParameterError("graph is not connected")

    def _connected(self) -> bool:
        adj = self.adjacency
        seen = [False] * self.n
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    count += 1
                    stack.append(w)
        return count == self.n

    @cached_property
    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        for lst in adj:
            lst.sort()
        return adj

    @cached_property
    def slot_index(self) -> dict[tuple[int, int], int]:
        return {e: s for s, e in enumerate(self.edges)}

    @property
    def degree(self) -> int:
        """Common degree of a regular graph; error if irregular."""
        d = self.degrees[0]
        if any(x != d for x in self.degrees):
            raise ParameterError("graph is not regular")
        return d

    def is_regular(self) -> bool:
        return all(x == self.degrees[0] for x in self.degrees)

    def edge_set(self) -> set[tuple[int, int]]:
        return set(self.edges)

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def __repr__(self) -> str:
        return f"Topology(n={self.n}, edges={len(self.edges)})"


def _pairing_attempt(n: int, d: int, rng: PrngState) -> list[tuple[int, int]] | None:
    """One configuration-model pairing; None on self-loop or duplicate.

    The stub multiset is shuffled by sorting random 64-bit keys, which is a
    uniform shuffle and lets one attempt run as a few array operations.
    """
    keys = rng.block_u64(n * d)
    stubs = np.argsort(keys, kind="stable") // d
    a = stubs[0::2]
    b = stubs[1::2]
    if (a == b).any():
        return None
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    codes = lo * n + hi
    if len(np.unique(codes)) != len(codes):
        return None
    order = np.argsort(codes)
    return [(int(lo[i]), int(hi[i])) for i in order]


def generate_regular(n: int, d: int, seed: int) -> Topology:
    """Uniform random connected d-regular graph on n nodes, deterministic in
    the seed.  Restarts the pairing from scratch on any rejection."""
    if n < 2 or d < 1:
        raise ParameterError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    if d >= n:
        raise ParameterError(f"degree {d} must be below node count {n}")
    if (n * d) % 2 != 0:
        raise ParameterError(f"n*d must be even, got n={n}, d={d}")
    rng = PrngState(seed)
    while True:
        edges = _pairing_attempt(n, d, rng)
        if edges is None:
            continue
        try:
            return Topology(n, edges)
        except ParameterError:
            continue  # disconnected sample: full restart


def normalized_adjacency(t: Topology) -> np.ndarray:
    """D^{-1/2} A D^{-1/2}; equals A/d on regular graphs."""
    a = t.adjacency_matrix()
    inv_sqrt = 1.0 / np.sqrt(np.array(t.degrees, dtype=float))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def spectral_gap(t: Topology) -> float:
    """1 - max(|lambda_2|, |lambda_n|) of the normalized adjacency; higher
    means better connected, 0 for bipartite graphs."""
    eig = np.linalg.eigvalsh(normalized_adjacency(t))
    return float(1.0 - max(abs(eig[0]), abs(eig[-2])))


def permuted_edge_set(t: Topology, p: Permutation) -> set[tuple[int, int]]:
    """{{p(i), p(j)}} for every edge, as a set of sorted pairs."""
    if len(p) < t.n:
        raise ParameterError("permutation smaller than node count")
    out = set()
    for i, j in t.edges:
        a, b = p(i), p(j)
        out.add((a, b) if a < b else (b, a))
    return out


def search_by_gap(n: int, d: int, sample_count: int, seed: int) -> list[tuple[Topology, float]]:
    """Generate `sample_count` random regular topologies and return them with
    their spectral gaps, sorted ascending by gap."""
    if sample_count < 1:
        raise ParameterError("sample_count must be at least 1")
    out = []
    for k in range(sample_count):
        t = generate_regular(n, d, mix64((seed + (k + 1) * GOLDEN) & MASK64))
        out.append((t, spectral_gap(t)))
    out.sort(key=lambda pair: pair[1])
    return out


# -- text file format: "n d" header, then one "i j" line per edge slot -------

def save_topology(t: Topology, path: str | Path) -> None:
    d = t.degree  # the file format is defined for regular graphs
    lines = [f"{t.n} {d}"]
    lines.extend(f"{i} {j}" for i, j in t.edges)
    Path(path).write_text("\n".join(lines) + "\n")


def load_topology(path: str | Path) -> Topology:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ParameterError(f"{path}: empty topology file")
    try:
        n, d = (int(x) for x in text[0].split())
    except ValueError as exc:
        raise ParameterError(f"{path}: malformed header {text[0]!r}") from exc
    edges = []
    for line in text[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise ParameterError(f"{path}: malformed edge line {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if len(edges) != n * d // 2:
        raise ParameterError(f"{path}: expected {n * d // 2} edges, found {len(edges)}")
    t = Topology(n, edges)
    if any(x != d for x in t.degrees):
        raise ParameterError(f"{path}: graph is not {d}-regular")
    return t
