"""Command-line entry point.

Exit codes: 0 stopping rule met (or plain success), 2 halted at the query
maximum, 3 bad input, 4 run aborted, 5 budget parity violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from alqst.harness import (
    EXIT_ABORTED,
    EXIT_CONFIG,
    EXIT_MET,
    ConfigError,
    ExperimentConfig,
    TargetConfig,
    load_config,
    resolve_target,
    run,
)
from alqst.observables import observable_report
from alqst.quantum import GATE_FAMILIES, SnapshotPool, born_sample, read_state, validate_config, write_state
from alqst.rbm import load_checkpoint, to_statevector


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="experiment TOML file")
    p.add_argument("--seed", type=int, default=d, help="seed (replaces the config's seed list)")
    p.add_argument("--out", default=d, help="output directory or file")
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS if suppress else 1, help="parallel seed jobs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alqst", description="Active-learning tomography with RBM committees")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("state", parents=[common], help="build a target state and write it in binary form")
    p.add_argument("--kind", choices=["named", "xxz", "kcs"], default=None)
    p.add_argument("--name", default="ghz_phi")
    p.add_argument("-n", "--num-qubits", type=int, default=5)
    p.add_argument("--L", type=int, default=8)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=1e-7)

    p = sub.add_parser("sample", parents=[common], help="draw Born-rule snapshots into a snapshot file")
    p.add_argument("--state", help="binary state file (default: the config's target)")
    p.add_argument("--basis", action="append", default=[], metavar="CONFIG:COUNT",
                   help="e.g. zzzzz:100; repeatable")
    p.add_argument("--bootstrap", type=int, default=0, help="COUNT snapshots in each uniform basis")
    p.add_argument("--family", choices=GATE_FAMILIES, default=None)

    for name, help_ in (
        ("al-run", "active-learning run"),
        ("baseline-run", "random-configuration baseline"),
        ("compare", "AL and budget-matched baseline per seed"),
        ("sweep", "baseline sweep over sample or config counts"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "baseline-run":
            p.add_argument("--budget", help="comma-separated per-config counts, reference first")

    p = sub.add_parser("observables", parents=[common], help="observable report for a state or checkpoint")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--state", help="binary state file")
    src.add_argument("--checkpoint", help="RBM checkpoint JSON")
    p.add_argument("--reference", help="reference basis of the checkpoint (default zz..z)")
    p.add_argument("--family", choices=GATE_FAMILIES, default="hadamard_k")
    p.add_argument("--target", help="binary target state for the fidelity")
    return parser


def _experiment(args, mode: str) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = load_config(args.config)
    cfg = replace(cfg, mode=mode)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out:
        cfg.output_dir = args.out
    if getattr(args, "budget", None):
        try:
            cfg.budget = [int(x) for x in args.budget.split(",")]
        except ValueError as err:
            raise ConfigError(f"bad --budget {args.budget!r}") from err
    cfg.validate()
    return cfg


def _cmd_state(args) -> int:
    if args.config and args.kind is None:
        tc = load_config(args.config).target
    else:
        tc = TargetConfig(kind=args.kind or "named", name=args.name, num_qubits=args.num_qubits, L=args.L,
                          J=args.J, Delta=args.delta, t=args.t, h=args.h, mu=args.mu)
    tc.validate()
    target = resolve_target(tc)
    if target.state is None:
        raise ConfigError("the target has no exact state to write")
    out = Path(args.out or "state.bin")
    write_state(target.state, out)
    print(json.dumps({"path": str(out), **target.info}, default=float))
    return EXIT_MET


def _parse_basis(item: str) -> tuple[str, int]:
    try:
        config, count = item.split(":")
        return config, int(count)
    except ValueError as err:
        raise ConfigError(f"bad --basis {item!r}; expected CONFIG:COUNT") from err


def _cmd_sample(args) -> int:
    family = args.family
    if args.state:
        state = read_state(args.state)
    elif args.config:
        cfg = load_config(args.config)
        state = resolve_target(cfg.target).state
        family = family or cfg.gate_family
        if state is None:
            raise ConfigError("the config's target has no exact state to sample")
    else:
        raise ConfigError("sample needs --state or --config")
    family = family or "hadamard_k"
    n = state.num_qubits
    requests = [_parse_basis(b) for b in args.basis]
    if args.bootstrap:
        requests = [(a * n, args.bootstrap) for a in "zxy"] + requests
    if not requests:
        raise ConfigError("nothing to sample; give --basis or --bootstrap")
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    pool = SnapshotPool(n)
    for config, count in requests:
        pool.extend(born_sample(state, validate_config(config, n), count, rng, family))
    out = Path(args.out or "snapshots.txt")
    pool.write(out)
    print(json.dumps({"path": str(out), "snapshots": len(pool), "configs": pool.config_counts()}))
    return EXIT_MET


def _cmd_observables(args) -> int:
    if args.state:
        state = read_state(args.state)
    else:
        wf, _ = load_checkpoint(args.checkpoint)
        state = to_statevector(wf, args.reference, args.family)
    target = read_state(args.target) if args.target else None
    report = observable_report(state, target).to_dict()
    if not args.out:
        print(json.dumps(report, indent=2))
        return EXIT_MET
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "observables.json").write_text(json.dumps(report, indent=2) + "\n")
    with open(out / "density.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "n_j"])
        w.writerows([j + 1, repr(v)] for j, v in enumerate(report["density_vector"]))
    with open(out / "greens.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d", "c_d"])
        w.writerows([d, repr(v)] for d, v in enumerate(report["greens"]))
    return EXIT_MET


_MODES = {"al-run": "al", "baseline-run": "baseline", "compare": "compare", "sweep": "sweep"}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "state":
            return _cmd_state(args)
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "observables":
            return _cmd_observables(args)
        cfg = _experiment(args, _MODES[args.command])
        code, out_dir = run(cfg, workers=max(1, args.workers))
        print(f"{args.command}: exit {code}, results in {out_dir}")
        return code
    except (ConfigError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as err:
        print(f"aborted: {err}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
