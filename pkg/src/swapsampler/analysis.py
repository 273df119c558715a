"""Convergence statistics and closed-form bound calculators.

Convergence toward uniform sampling is measured the same way throughout:
count how often each outcome (a neighborhood set, or a single peer id) was
observed, build an equally sized synthetic count vector by sampling the
outcome space uniformly, and run a two-sample Kolmogorov-Smirnov test
between the two count vectors (zero-padded to the full outcome space).  The
p-value uses the asymptotic Kolmogorov distribution with effective sample
size m*k/(m+k).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from .clocks import PrngState, uniform_matrix
from .errors import ParameterError


@dataclass(frozen=True)
class Histogram:
    counts: dict[Hashable, int]
    total: int

    def count_vector(self, domain_size: int) -> np.ndarray:
        """Observed counts, zero-padded up to the domain size, ascending."""
        if domain_size < len(self.counts):
            raise ParameterError(
                f"domain size {domain_size} below {len(self.counts)} distinct outcomes")
        vec = np.zeros(domain_size, dtype=np.int64)
        vec[domain_size - len(self.counts):] = sorted(self.counts.values())
        return vec


@dataclass(frozen=True)
class KsResult:
    distance: float
    p_value: float

    def __post_init__(self):
        if not (0 <= self.distance <= 1 and 0 <= self.p_value <= 1):
            raise ParameterError("KS distance and p-value must lie in [0, 1]")


def canonical_key(observation: Hashable) -> Hashable:
    """Neighborhood observations collapse to sorted tuples; scalars stand."""
    if isinstance(observation, (tuple, list, set, frozenset)):
        return tuple(sorted(observation))
    return observation


def frequency_counts(observations: Sequence[Hashable]) -> Histogram:
    """Exact multiset count of canonicalized observations."""
    if len(observations) == 0:
        raise ParameterError("no observations to count")
    counts: dict[Hashable, int] = {}
    for obs in observations:
        key = canonical_key(obs)
        counts[key] = counts.get(key, 0) + 1
    return Histogram(counts, len(observations))


def kolmogorov_sf(x: float, terms: int = 100) -> float:
    """Asymptotic Kolmogorov survival function 2*sum (-1)^(k-1) exp(-2k^2x^2),
    truncated; ~1 below the series' useful range."""
    if x < 0.04:
        return 1.0
    total = 0.0
    for k in range(1, terms + 1):
        total += (-1) ** (k - 1) * math.exp(-2.0 * k * k * x * x)
    return min(1.0, max(0.0, 2.0 * total))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KsResult:
    """Two-sample KS on raw values: max ECDF gap, asymptotic p-value."""
    xa = np.sort(np.asarray(a, dtype=float))
    xb = np.sort(np.asarray(b, dtype=float))
    if len(xa) == 0 or len(xb) == 0:
        raise ParameterError("KS test needs nonempty samples")
    support = np.concatenate([xa, xb])
    cdf_a = np.searchsorted(xa, support, side="right") / len(xa)
    cdf_b = np.searchsorted(xb, support, side="right") / len(xb)
    distance = float(np.abs(cdf_a - cdf_b).max())
    n_eff = len(xa) * len(xb) / (len(xa) + len(xb))
    return KsResult(distance, kolmogorov_sf(math.sqrt(n_eff) * distance))


def synthetic_uniform_counts(total: int, domain_size: int, seed: int) -> np.ndarray:
    """Counts of `total` outcomes sampled uniformly over the domain."""
    rng_seed = PrngState(seed).seed
    draws = uniform_matrix(np.array([rng_seed], dtype=np.uint64), total)[0]
    outcomes = (draws * domain_size).astype(np.int64)
    return np.bincount(outcomes, minlength=domain_size)


def ks_uniform_test(h: Histogram, domain_size: int, synth_seed: int) -> KsResult:
    """Observed counts against a seeded synthetic uniform sample of the same
    total, compared as two count vectors over the full outcome space."""
    observed = h.count_vector(domain_size)
    synthetic = np.sort(synthetic_uniform_counts(h.total, domain_size, synth_seed))
    return ks_two_sample(observed, synthetic)


def tv_distance(mu: Sequence[float], nu: Sequence[float]) -> float:
    """Half the L1 distance between two probability vectors."""
    a = np.asarray(mu, dtype=float)
    b = np.asarray(nu, dtype=float)
    if a.shape != b.shape:
        raise ParameterError(f"length mismatch: {a.shape} vs {b.shape}")
    for name, vec in (("mu", a), ("nu", b)):
        if abs(vec.sum() - 1.0) > 1e-9:
            raise ParameterError(f"{name} sums to {vec.sum()}, not 1")
    return 0.5 * float(np.abs(a - b).sum())


def ecdf(values: Sequence[float]) -> list[tuple[float, float]]:
    """Sorted support with cumulative step heights k/N."""
    if len(values) == 0:
        raise ParameterError("ecdf of an empty sample")
    data = np.sort(np.asarray(values, dtype=float))
    out = []
    n = len(data)
    for i, v in enumerate(data):
        if i + 1 == n or data[i + 1] != v:
            out.append((float(v), (i + 1) / n))
    return out


# -- closed-form bound calculators --------------------------------------------

@dataclass(frozen=True)
class BoundsInput:
    """Inputs shared by the bound calculators.

    `alpha` is the mean clock period (seconds per ring on one edge), `c` the
    dimensionless comparison constant of the walk-to-interchange bound.
    """
    n: int
    d: int
    lam: float
    eps: float = 0.25
    delta: float = 0.1
    alpha: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.n < 2 or self.d < 1:
            raise ParameterError("need n >= 2 and d >= 1")
        if not 0 < self.lam <= 1:
            raise ParameterError(f"spectral gap must be in (0, 1], got {self.lam}")
        if self.alpha <= 0:
            raise ParameterError("mean period must be positive")
        if self.c < 0:
            raise ParameterError("comparison constant must be nonnegative")


def bound_rw_mixing(b: BoundsInput) -> float:
    """Mixing-time bound for the single-particle walk: alpha*ln(n/eps)/(d*lam)."""
    if b.eps <= 0 or b.eps >= b.n:
        raise ParameterError(f"need 0 < eps < n for a positive bound, got {b.eps}")
    return b.alpha * math.log(b.n / b.eps) / (b.d * b.lam)


def bound_ip_mixing(b: BoundsInput, t_rw_quarter: float) -> float:
    """Interchange mixing via the walk comparison: C*ln(n/eps)*T_rw(1/4)."""
    if not 0 < b.eps < 0.5:
        raise ParameterError(f"comparison bound needs eps in (0, 1/2), got {b.eps}")
    return b.c * math.log(b.n / b.eps) * t_rw_quarter


def bound_sample_convergence(b: BoundsInput) -> float:
    """Time after which every sample is delta-close to uniform:
    alpha*C*ln(2 n^(d+1)/delta)*ln(4n)/(d*lam), evaluated in log space."""
    if not 0 < b.delta < 1:
        raise ParameterError(f"delta must be in (0, 1), got {b.delta}")
    log_term = math.log(2.0) + (b.d + 1) * math.log(b.n) - math.log(b.delta)
    return b.alpha * b.c * log_term * math.log(4.0 * b.n) / (b.d * b.lam)


def repetitions_needed(n: int, d: int, mode: str) -> int:
    """Run count giving ~100 expected observations per outcome, split over
    the d slots of each observation."""
    if n < 2 or d < 1 or d >= n:
        raise ParameterError(f"invalid (n, d) = ({n}, {d})")
    if mode == "neighborhood":
        return math.ceil(math.comb(n - 1, d) * 100 / d)
    if mode == "per_peer":
        return math.ceil((n - 1) * 100 / d)
    raise ParameterError(f"unknown repetition mode {mode!r}")


# -- exports ------------------------------------------------------------------

def write_histogram_csv(h: Histogram, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "count"])
        for key in sorted(h.counts, key=str):
            writer.writerow([format_key(key), h.counts[key]])


def format_key(key: Hashable) -> str:
    if isinstance(key, tuple):
        return "-".join(str(v) for v in key)
    return str(key)


def write_ks_report(path: str | Path, ks: KsResult, total: int,
                    domain_size: int, synth_seed: int) -> None:
    lines = [
        f"distance = {ks.distance:.9g}",
        f"p_value = {ks.p_value:.9g}",
        f"total = {total}",
        f"domain_size = {domain_size}",
        f"synth_seed = {synth_seed}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")
