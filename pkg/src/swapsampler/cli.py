"""Command-line front end.

Subcommands: gen-topology, run-ideal, run-locked, equivalence-check,
analyze, bounds.  Run modes read a flat `key = value` config file (with `#`
comments); any flag given on the command line overrides the file.  Exit
codes: 0 success, 2 usage error, 1 invariant violation or failed check.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis
from .analysis import BoundsInput
from .errors import InvariantError, ParameterError
from .experiments import (EquivalenceReport, ExperimentConfig, analyze_runs,
                          edge_activation_rate, equivalence_check,
                          resolve_topology, run_experiment)
from .topology import (generate_regular, save_topology, search_by_gap,
                       spectral_gap)


def parse_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}: malformed config line {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("_", "-")] = value
    return values


_RUN_KEYS = {
    "n": int, "d": int, "rate": float, "mean-period": float,
    "edge-activations": float, "horizon": float, "repetitions": str,
    "sample-mode": str, "delay-model": str, "delta-max-ms": float,
    "trace-path": str, "master-seed": int, "topology": str,
    "topology-seed": int, "observed-peer": str, "workers": int,
    "out-dir": str, "engine": str, "synth-seed": int,
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    for key, typ in _RUN_KEYS.items():
        parser.add_argument(f"--{key}", type=typ, default=None)


def _merged_run_settings(args: argparse.Namespace) -> dict[str, str]:
    settings: dict[str, str] = {}
    if args.config:
        settings.update(parse_config_file(args.config))
    for key in _RUN_KEYS:
        flag = getattr(args, key.replace("-", "_"))
        if flag is not None:
            settings[key] = str(flag)
    return settings


def _build_config(mode: str, settings: dict[str, str]) -> ExperimentConfig:
    def get(key, cast, default):
        return cast(settings[key]) if key in settings else default

    reps_raw = settings.get("repetitions", "1")
    repetitions: int | str = "auto" if reps_raw == "auto" else int(reps_raw)
    observed_raw = settings.get("observed-peer", "0")
    observed: int | str = "random" if observed_raw == "random" else int(observed_raw)
    cfg = ExperimentConfig(
        mode=mode,
        n=get("n", int, 0),
        d=get("d", int, 0),
        horizon=get("horizon", float, 0.0),
        repetitions=repetitions,
        sample_mode=get("sample-mode", str, "neighborhood"),
        delay_model=get("delay-model", str, "zero"),
        delta_max_ms=get("delta-max-ms", float, 0.0),
        trace_path=settings.get("trace-path"),
        master_seed=get("master-seed", int, 1),
        topology_path=settings.get("topology"),
        topology_seed=get("topology-seed", int, 1),
        observed_peer=observed,
        workers=get("workers", int, 1),
        out_dir=get("out-dir", str, "out"),
        engine=get("engine", str, "batch"),
        synth_seed=get("synth-seed", int, 7),
    )
    topology = resolve_topology(cfg)
    if "rate" in settings:
        cfg.rate = float(settings["rate"])
    elif "mean-period" in settings:
        period = float(settings["mean-period"])
        if period <= 0:
            raise ParameterError("mean period must be positive")
        cfg.rate = 1.0 / period
    elif "edge-activations" in settings:
        cfg.rate = edge_activation_rate(float(settings["edge-activations"]),
                                        len(topology.edges))
    cfg.validate()
    return cfg


def _cmd_gen_topology(args) -> int:
    if args.samples is None:
        topo = generate_regular(args.n, args.d, args.seed)
        gap = spectral_gap(topo)
    else:
        ranked = search_by_gap(args.n, args.d, args.samples, args.seed)
        if args.pick == "min":
            topo, gap = ranked[0]
        elif args.pick == "max":
            topo, gap = ranked[-1]
        elif args.pick == "median":
            topo, gap = ranked[len(ranked) // 2]
        else:
            topo, gap = ranked[int(args.pick)]
    save_topology(topo, args.out)
    print(f"wrote {args.out}: n={topo.n} d={topo.degree} spectral_gap={gap:.6f}")
    return 0


def _cmd_run(mode: str, args) -> int:
    cfg = _build_config(mode, _merged_run_settings(args))
    report = run_experiment(cfg)
    print(report.to_json())
    return 0


def _cmd_equivalence(args) -> int:
    report: EquivalenceReport = equivalence_check(
        args.n_max, args.seeds, horizon=args.horizon, base_seed=args.base_seed)
    print(report.to_json())
    return 0 if report.passed else 1


def _cmd_analyze(args) -> int:
    hist, ks = analyze_runs(args.runs, args.domain_size, args.synth_seed,
                            args.out_dir)
    print(f"observations = {hist.total}")
    print(f"distance = {ks.distance:.9g}")
    print(f"p_value = {ks.p_value:.9g}")
    return 0


def _cmd_bounds(args) -> int:
    inputs = BoundsInput(n=args.n, d=args.d, lam=args.gap, eps=args.eps,
                         delta=args.delta, alpha=args.mean_period, c=args.c_const)
    t_rw = analysis.bound_rw_mixing(inputs)
    quarter = analysis.bound_rw_mixing(
        BoundsInput(n=args.n, d=args.d, lam=args.gap, eps=0.25,
                    alpha=args.mean_period, c=args.c_const))
    t_ip = analysis.bound_ip_mixing(inputs, quarter)
    t_sample = analysis.bound_sample_convergence(inputs)
    print(f"walk_mixing_bound = {t_rw:.9g}")
    print(f"interchange_mixing_bound = {t_ip:.9g}")
    print(f"sample_convergence_bound = {t_sample:.9g}")
    for mode in ("neighborhood", "per_peer"):
        print(f"repetitions_{mode} = {analysis.repetitions_needed(args.n, args.d, mode)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swapsampler",
        description="Swap-based gossip peer-sampler simulator and analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-topology", help="generate a regular topology file")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--out", required=True)
    gen.add_argument("--samples", type=int, default=None,
                     help="sample this many topologies and pick by spectral gap")
    gen.add_argument("--pick", default="median",
                     help="min | max | median | integer rank (with --samples)")

    for mode in ("run-ideal", "run-locked"):
        run = sub.add_parser(mode, help=f"{mode} experiment family")
        _add_run_flags(run)

    eq = sub.add_parser("equivalence-check",
                        help="protocol vs interchange placement cross-check")
    eq.add_argument("--n-max", type=int, default=16)
    eq.add_argument("--seeds", type=int, default=100)
    eq.add_argument("--horizon", type=float, default=10.0)
    eq.add_argument("--base-seed", type=int, default=1)

    an = sub.add_parser("analyze", help="recompute aggregates from runs.csv")
    an.add_argument("--runs", required=True)
    an.add_argument("--domain-size", type=int, required=True)
    an.add_argument("--synth-seed", type=int, default=7)
    an.add_argument("--out-dir", default="out")

    bd = sub.add_parser("bounds", help="closed-form convergence bounds")
    bd.add_argument("--n", type=int, required=True)
    bd.add_argument("--d", type=int, required=True)
    bd.add_argument("--gap", type=float, required=True)
    bd.add_argument("--eps", type=float, default=0.25)
    bd.add_argument("--delta", type=float, default=0.1)
    bd.add_argument("--mean-period", type=float, default=1.0)
    bd.add_argument("--c-const", type=float, default=1.0)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-topology":
            return _cmd_gen_topology(args)
        if args.command == "run-ideal":
            return _cmd_run("run-ideal", args)
        if args.command == "run-locked":
            return _cmd_run("run-locked", args)
        if args.command == "equivalence-check":
            return _cmd_equivalence(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "bounds":
            return _cmd_bounds(args)
        parser.error(f"unknown command {args.command!r}")
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
