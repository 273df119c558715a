"""Experiment orchestration: seeded repetition management and reports.

A run family is described by an `ExperimentConfig`; per-run seeds are hashed
from the master seed and the run index, so any single run can be reproduced
in isolation and the worker count never changes results.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, clocks, ideal, interchange, lockswap
from .analysis import Histogram, KsResult
from .clocks import PrngState
from .errors import ParameterError
from .netsim import DelayModel, load_trace
from .topology import Topology, generate_regular, load_topology

MODES = ("gen-topology", "run-ideal", "run-locked", "equivalence-check",
         "analyze", "bounds")
SAMPLE_MODES = ("neighborhood", "per_peer")


@dataclass
class ExperimentConfig:
    mode: str
    n: int = 0
    d: int = 0
    rate: float = 1.0
    horizon: float = 0.0
    repetitions: int | str = 1          # int or "auto"
    sample_mode: str = "neighborhood"
    delay_model: str = "zero"           # zero | uniform | trace
    delta_max_ms: float = 0.0
    trace_path: Optional[str] = None
    master_seed: int = 1
    topology_path: Optional[str] = None
    topology_seed: int = 1
    observed_peer: int | str = 0        # index or "random"
    workers: int = 1
    out_dir: str = "out"
    engine: str = "batch"               # batch | event (run-ideal only)
    synth_seed: int = 7

    def resolved_repetitions(self) -> int:
        if self.repetitions == "auto":
            if self.mode not in ("run-ideal", "run-locked"):
                raise ParameterError("auto repetitions only apply to run modes")
            return analysis.repetitions_needed(self.n, self.d, self.sample_mode)
        reps = int(self.repetitions)
        if reps < 1:
            raise ParameterError(f"repetitions must be at least 1, got {reps}")
        return reps

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.sample_mode not in SAMPLE_MODES:
            raise ParameterError(f"unknown sample mode {self.sample_mode!r}")
        if self.mode in ("run-ideal", "run-locked"):
            if self.horizon <= 0:
                raise ParameterError("run modes need a positive horizon")
            if self.rate <= 0:
                raise ParameterError("clock rate must be positive")
            self.resolved_repetitions()
        if self.engine not in ("batch", "event"):
            raise ParameterError(f"unknown engine {self.engine!r}")
        if self.workers < 1:
            raise ParameterError("worker count must be at least 1")


def edge_activation_rate(target_activations_per_s: float, edge_count: int) -> float:
    """Per-clock rate giving `target` expected rings per second network-wide."""
    if target_activations_per_s <= 0 or edge_count < 1:
        raise ParameterError("need a positive activation target and edges")
    return target_activations_per_s / edge_count


def run_seed(master_seed: int, run_index: int) -> int:
    return clocks.substream_seed(master_seed, clocks.RUN_SPACE, run_index)


def resolve_topology(cfg: ExperimentConfig) -> Topology:
    if cfg.topology_path:
        return load_topology(cfg.topology_path)
    return generate_regular(cfg.n, cfg.d, cfg.topology_seed)


def resolve_observed(cfg: ExperimentConfig, topology: Topology) -> int:
    if cfg.observed_peer == "random":
        return PrngState(clocks.substream_seed(
            cfg.master_seed, clocks.PEER_SPACE, 0)).uniform_int(topology.n)
    peer = int(cfg.observed_peer)
    if not 0 <= peer < topology.n:
        raise ParameterError(f"observed peer {peer} out of range")
    return peer


def build_delay_model(cfg: ExperimentConfig) -> DelayModel:
    if cfg.delay_model == "zero":
        return DelayModel.zero()
    if cfg.delay_model == "uniform":
        return DelayModel.uniform(cfg.delta_max_ms)
    if cfg.delay_model == "trace":
        if not cfg.trace_path:
            raise ParameterError("trace delay model needs trace-path")
        return DelayModel.trace(load_trace(cfg.trace_path))
    raise ParameterError(f"unknown delay model {cfg.delay_model!r}")


@dataclass
class Report:
    config: dict
    histogram: Histogram
    ks: KsResult
    domain_size: int
    throughput: Optional[float] = None
    failed_swaps: Optional[int] = None
    duration_quantiles: Optional[dict[str, float]] = None

    def to_json(self) -> str:
        body = {
            "config": self.config,
            "observations": self.histogram.total,
            "distinct_outcomes": len(self.histogram.counts),
            "domain_size": self.domain_size,
            "ks": {"distance": self.ks.distance, "p_value": self.ks.p_value},
        }
        if self.throughput is not None:
            body["throughput_swaps_per_s"] = self.throughput
            body["failed_swaps"] = self.failed_swaps
            body["swap_duration_quantiles"] = self.duration_quantiles
        return json.dumps(body, indent=2, sort_keys=True)


# -- ideal-mode engines -------------------------------------------------------

def _ideal_observations_batch(topology: Topology, cfg: ExperimentConfig,
                              observed: int, reps: int) -> list:
    seeds = np.array([run_seed(cfg.master_seed, r) for r in range(reps)],
                     dtype=np.uint64)
    sigma = ideal.final_permutations(topology, cfg.rate, cfg.horizon, seeds)
    if cfg.sample_mode == "neighborhood":
        hoods = ideal.final_neighborhoods(topology, sigma, observed)
        return [tuple(int(v) for v in row) for row in hoods]
    picks = ideal.sample_one_neighbor(topology, sigma, observed, seeds)
    return [int(v) for v in picks]


def _ideal_single_event(topology: Topology, rate: float, horizon: float,
                        seed: int, observed: int, sample_mode: str):
    run = ideal.IdealRun(topology, rate, seed)
    run.run_until(horizon)
    size = len(run.neighbors[observed]) if sample_mode == "neighborhood" else 1
    sample = run.sample(observed, size)
    return tuple(sorted(sample)) if sample_mode == "neighborhood" else sample[0]


def _event_chunk(args) -> list:
    topology, cfg_dict, observed, indices = args
    cfg = ExperimentConfig(**cfg_dict)
    out = []
    for r in indices:
        if cfg.mode == "run-ideal":
            out.append(_ideal_single_event(
                topology, cfg.rate, cfg.horizon,
                run_seed(cfg.master_seed, r), observed, cfg.sample_mode))
        else:
            out.append(_locked_single(topology, cfg, observed, r)[0])
    return out


def _locked_single(topology: Topology, cfg: ExperimentConfig, observed: int,
                   run_index: int):
    seed = run_seed(cfg.master_seed, run_index)
    net = lockswap.LockedNetwork(topology, cfg.rate, seed, build_delay_model(cfg))
    stats = net.run(cfg.horizon, drain=True)
    rng = PrngState(clocks.substream_seed(seed, clocks.SAMPLE_SPACE, 0))
    size = topology.degrees[observed] if cfg.sample_mode == "neighborhood" else 1
    sample = net.sample(observed, size, rng)
    obs = tuple(sorted(sample)) if cfg.sample_mode == "neighborhood" else sample[0]
    return obs, stats, net.outcomes


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> Report:
    """Execute the configured repetitions, aggregate, and write the report
    files (runs.csv, histogram.csv, ks_report.txt, report.json, and
    swaps.csv in locked mode)."""
    cfg.validate()
    if cfg.mode not in ("run-ideal", "run-locked"):
        raise ParameterError(f"run_experiment cannot handle mode {cfg.mode!r}")
    topology = resolve_topology(cfg)
    observed = resolve_observed(cfg, topology)
    reps = cfg.resolved_repetitions()
    out_path = Path(out_dir if out_dir is not None else cfg.out_dir)
    out_path.mkdir(parents=True, exist_ok=True)

    all_outcomes: list[lockswap.SwapOutcome] = []
    succeeded = failed = 0
    if cfg.mode == "run-ideal" and cfg.engine == "batch":
        observations = _ideal_observations_batch(topology, cfg, observed, reps)
    else:
        indices = list(range(reps))
        if cfg.workers > 1:
            chunks = [indices[i::cfg.workers] for i in range(cfg.workers)]
            args = [(topology, asdict(cfg), observed, chunk) for chunk in chunks]
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                parts = list(pool.map(_event_chunk, args))
            observations = [None] * reps
            for chunk, part in zip(chunks, parts):
                for idx, obs in zip(chunk, part):
                    observations[idx] = obs
        elif cfg.mode == "run-ideal":
            observations = [_ideal_single_event(
                topology, cfg.rate, cfg.horizon, run_seed(cfg.master_seed, r),
                observed, cfg.sample_mode) for r in indices]
        else:
            observations = []
            for r in indices:
                obs, stats, outcomes = _locked_single(topology, cfg, observed, r)
                observations.append(obs)
                succeeded += stats.swaps_succeeded
                failed += stats.swaps_failed
                all_outcomes.extend(outcomes)

    hist = analysis.frequency_counts(observations)
    domain = (math.comb(topology.n - 1, topology.degree)
              if cfg.sample_mode == "neighborhood" else topology.n - 1)
    ks = analysis.ks_uniform_test(hist, domain, cfg.synth_seed)

    _write_runs_csv(out_path / "runs.csv", cfg, observations)
    analysis.write_histogram_csv(hist, out_path / "histogram.csv")
    analysis.write_ks_report(out_path / "ks_report.txt", ks, hist.total,
                             domain, cfg.synth_seed)
    report = Report(config=_config_echo(cfg, topology, observed, reps),
                    histogram=hist, ks=ks, domain_size=domain)
    if cfg.mode == "run-locked":
        lockswap.write_swap_outcomes(all_outcomes, out_path / "swaps.csv")
        durations = lockswap.swap_durations(all_outcomes)
        report.throughput = succeeded / (cfg.horizon * reps)
        report.failed_swaps = failed
        report.duration_quantiles = _quantiles(durations)
    (out_path / "report.json").write_text(report.to_json() + "\n")
    return report


def _quantiles(durations: list[float]) -> dict[str, float]:
    if not durations:
        return {}
    arr = np.asarray(durations)
    return {"p50": float(np.quantile(arr, 0.5)),
            "p90": float(np.quantile(arr, 0.9)),
            "p99": float(np.quantile(arr, 0.99)),
            "mean": float(arr.mean())}


def _config_echo(cfg: ExperimentConfig, topology: Topology, observed: int,
                 reps: int) -> dict:
    echo = asdict(cfg)
    echo["resolved_repetitions"] = reps
    echo["resolved_observed_peer"] = observed
    echo["edge_count"] = len(topology.edges)
    return echo


def _write_runs_csv(path: Path, cfg: ExperimentConfig, observations: list) -> None:
    lines = ["run_index,seed,observation_key"]
    for r, obs in enumerate(observations):
        key = analysis.format_key(analysis.canonical_key(obs))
        lines.append(f"{r},{run_seed(cfg.master_seed, r)},{key}")
    path.write_text("\n".join(lines) + "\n")


def read_runs_csv(path: str | Path) -> list:
    """Observation keys from a per-run CSV, for re-aggregation."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != "run_index,seed,observation_key":
        raise ParameterError(f"{path}: not a runs.csv file")
    out = []
    for line in lines[1:]:
        key = line.split(",", 2)[2]
        if "-" in key:
            out.append(tuple(int(v) for v in key.split("-")))
        else:
            out.append(int(key))
    return out


def analyze_runs(runs_path: str | Path, domain_size: int, synth_seed: int,
                 out_dir: str | Path) -> tuple[Histogram, KsResult]:
    """Recompute the aggregate histogram and KS result from a runs.csv."""
    observations = read_runs_csv(runs_path)
    hist = analysis.frequency_counts(observations)
    ks = analysis.ks_uniform_test(hist, domain_size, synth_seed)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    analysis.write_histogram_csv(hist, out_path / "histogram.csv")
    analysis.write_ks_report(out_path / "ks_report.txt", ks, hist.total,
                             domain_size, synth_seed)
    return hist, ks


# -- interchange equivalence --------------------------------------------------

@dataclass
class EquivalenceReport:
    checks: int
    passed: bool
    first_mismatch: Optional[dict] = field(default=None)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def equivalence_check(n_max: int, seeds: int, horizon: float = 10.0,
                      base_seed: int = 1,
                      corrupt: bool = False) -> EquivalenceReport:
    """Protocol-vs-interchange cross-check: for each seed, a random regular
    topology is simulated both as the swap protocol and as an n-particle
    interchange over the same ring stream; placements must match exactly.

    `corrupt` is a negative-control hook: it permutes the slot-to-edge map on
    the interchange side, which must produce a mismatch report.
    """
    if n_max < 2:
        raise ParameterError("n_max must be at least 2")
    picker = PrngState(base_seed)
    for check in range(seeds):
        n = 2 + picker.uniform_int(n_max - 1)
        candidates = [d for d in (2, 3, 4) if d < n and (n * d) % 2 == 0] or [1]
        d = candidates[picker.uniform_int(len(candidates))]
        topo_seed = picker.next_u64()
        master = picker.next_u64()
        topology = generate_regular(n, d, topo_seed)
        run = ideal.IdealRun(topology, 1.0, master)
        log = run.run_until(horizon)
        placement = tuple(run.gamma)
        ip_topology = topology
        if corrupt and len(topology.edges) >= 2:
            reordered = list(topology.edges)
            reordered[0], reordered[1] = reordered[1], reordered[0]
            ip_topology = Topology(topology.n, reordered)
        final = interchange.ip_simulate(
            topology.n, ip_topology, tuple(range(topology.n)), 1.0, master, horizon)
        if final != placement:
            return EquivalenceReport(
                checks=check + 1, passed=False,
                first_mismatch={
                    "seed_index": check,
                    "n": n, "d": d,
                    "topology_seed": topo_seed,
                    "master_seed": master,
                    "protocol_placement": list(placement),
                    "interchange_placement": list(final),
                    "ring_log": [[r.time, r.slot] for r in log],
                })
    return EquivalenceReport(checks=seeds, passed=True)
